//! Seeded Monte Carlo realization of the random slab polytope and unbiased
//! estimators for the symmetric volume difference, the surface area
//! deviation, and the slab exit probability.
//!
//! Reproducibility contract: every estimator is a pure function of its
//! inputs, a 64-bit seed, and a sample count. Each consumer draws from its
//! own counter-based stream (`ChaCha8` with a fixed stream index), so
//! realizations and estimators never share randomness and work can fan out
//! across threads with pre-assigned streams. Re-runs are bit-identical.
//!
//! The polytope is star-shaped about the origin, so volumes are integrated
//! exactly in polar form through the radial function: for a uniform direction
//! `u`, `rho(u) = t / max_i |<u, y_i>|` and
//! `Delta_v = |D_n| E[max(rho, 1)^n - min(rho, 1)^n]`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ApproxParams, BallGeometry};

/// Radial values beyond this are clipped before powers are taken; the induced
/// bias is far below every statistical tolerance used here and estimators
/// report how often the clip fired.
pub const RADIAL_CLIP: f64 = 1e6;

/// Largest facet count the realization path accepts.
pub const MAX_FACETS: f64 = (1u64 << 24) as f64;

/// Stream indices: one per consumer of randomness, so a single seed can
/// drive a realization and each of its estimators independently.
pub const STREAM_REALIZE: u64 = 0;
pub const STREAM_SYM_DIFF: u64 = 1;
pub const STREAM_SURFACE: u64 = 2;
pub const STREAM_ALPHA: u64 = 3;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a per-work-unit seed from a master seed; used to hand each
/// realization in a batch its own token.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut state = master ^ index.wrapping_mul(0xA076_1D64_78BD_642F);
    splitmix64(&mut state)
}

/// Counter-based generator for (`seed`, `stream`); the same pair always
/// yields the same sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(stream);
    rng
}

/// Map `f` over realization indices `0..count` with a deterministic output
/// order, fanning out across threads when available.
pub fn map_realizations<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

fn sample_direction_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm_sq = 0.0;
        for x in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = g;
            norm_sq += g * g;
        }
        if norm_sq > 0.0 {
            let inv = norm_sq.sqrt().recip();
            for x in out.iter_mut() {
                *x *= inv;
            }
            return;
        }
    }
}

/// Uniform direction on the unit sphere in `n` dimensions, via normalized
/// independent standard normals.
pub fn sample_direction<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; n as usize];
    sample_direction_into(rng, &mut out);
    out
}

/// One realization of the random slab polytope
/// `{x : |<x, y_i>| <= t, i = 1..N/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabPolytope {
    n: u32,
    width: f64,
    directions: Vec<f64>,
    seed: u64,
    spans: bool,
}

fn spans_full_dimension(directions: &[f64], n: usize) -> bool {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for d in directions.chunks_exact(n) {
        let mut v = d.to_vec();
        for b in &basis {
            let coef: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= coef * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
            if basis.len() == n {
                return true;
            }
        }
    }
    false
}

impl SlabPolytope {
    /// Draw `N/2` independent uniform normals for the budget carried by
    /// `params`, which must be an even integer with `N/2 >= n` here.
    ///
    /// A realization whose normals fail to span the space is returned with
    /// the `spans` flag cleared, never resampled: the caller decides.
    pub fn realize(params: &ApproxParams, seed: u64) -> Result<Self> {
        let n = params.n();
        let facets_real = params.log_facets().exp();
        if !facets_real.is_finite() || facets_real > MAX_FACETS {
            return Err(Error::BadFacetCount { given: facets_real });
        }
        let facets = facets_real.round();
        if (facets - facets_real).abs() > 1e-6 * facets
            || facets % 2.0 != 0.0
            || facets / 2.0 < f64::from(n)
        {
            return Err(Error::BadFacetCount { given: facets_real });
        }
        let slabs = (facets / 2.0) as usize;
        let mut rng = stream_rng(seed, STREAM_REALIZE);
        let dim = n as usize;
        let mut directions = vec![0.0; slabs * dim];
        for chunk in directions.chunks_exact_mut(dim) {
            sample_direction_into(&mut rng, chunk);
        }
        let spans = spans_full_dimension(&directions, dim);
        Ok(Self {
            n,
            width: params.width(),
            directions,
            seed,
            spans,
        })
    }

    /// Build a polytope from explicit unit normals. Intended for hand-made
    /// configurations; unlike `realize`, any positive finite width is
    /// accepted so that bodies containing the unit ball can be constructed.
    pub fn from_directions(n: u32, width: f64, directions: Vec<f64>, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall { min: 2, got: n });
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::OutOfRange {
                name: "width",
                value: width,
                range: "(0, inf)",
            });
        }
        let dim = n as usize;
        if directions.is_empty() || directions.len() % dim != 0 {
            return Err(Error::BadFacetCount {
                given: directions.len() as f64,
            });
        }
        for d in directions.chunks_exact(dim) {
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::OutOfRange {
                    name: "direction norm",
                    value: norm,
                    range: "1 +/- 1e-12",
                });
            }
        }
        let spans = spans_full_dimension(&directions, dim);
        Ok(Self {
            n,
            width,
            directions,
            seed,
            spans,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether the normals span the full space; equivalently, whether the
    /// polytope is bounded.
    pub fn spans(&self) -> bool {
        self.spans
    }

    pub fn slab_count(&self) -> usize {
        self.directions.len() / self.n as usize
    }

    pub fn facet_count(&self) -> u64 {
        2 * self.slab_count() as u64
    }

    pub fn directions(&self) -> impl Iterator<Item = &[f64]> {
        self.directions.chunks_exact(self.n as usize)
    }

    /// Distance from the origin to the boundary along `u`:
    /// `t / max_i |<u, y_i>|`, infinite when `u` is orthogonal to every
    /// normal (measure zero for spanning realizations).
    pub fn radial(&self, u: &[f64]) -> f64 {
        let dim = self.n as usize;
        debug_assert_eq!(u.len(), dim);
        let mut max_abs = 0.0f64;
        match dim {
            2 => {
                for d in self.directions.chunks_exact(2) {
                    let s = (d[0] * u[0] + d[1] * u[1]).abs();
                    if s > max_abs {
                        max_abs = s;
                    }
                }
            }
            3 => {
                for d in self.directions.chunks_exact(3) {
                    let s = (d[0] * u[0] + d[1] * u[1] + d[2] * u[2]).abs();
                    if s > max_abs {
                        max_abs = s;
                    }
                }
            }
            4 => {
                for d in self.directions.chunks_exact(4) {
                    let s = (d[0] * u[0] + d[1] * u[1] + d[2] * u[2] + d[3] * u[3]).abs();
                    if s > max_abs {
                        max_abs = s;
                    }
                }
            }
            _ => {
                for d in self.directions.chunks_exact(dim) {
                    let s = d.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().abs();
                    if s > max_abs {
                        max_abs = s;
                    }
                }
            }
        }
        if max_abs == 0.0 {
            f64::INFINITY
        } else {
            self.width / max_abs
        }
    }
}

/// Monte Carlo value with its standard error; bit-for-bit reproducible from
/// `(seed, samples)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn estimate(&self, seed: u64) -> Estimate {
        let std_error = if self.count > 1 {
            (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            std_error,
            samples: self.count,
            seed,
        }
    }
}

fn validate_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        return Err(Error::OutOfRange {
            name: "samples",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    Ok(())
}

/// Symmetric volume difference estimate plus how many radial samples were
/// clipped at `RADIAL_CLIP`. A clipped share above 0.1% means the body has a
/// heavy tail and the value should be treated as a lower estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymDiffEstimate {
    pub estimate: Estimate,
    pub clipped: u64,
}

impl SymDiffEstimate {
    /// Whether clipping exceeded the 0.1% warning threshold.
    pub fn clip_warning(&self) -> bool {
        (self.clipped as f64) > 0.001 * self.estimate.samples as f64
    }
}

/// Spherical Monte Carlo for `Delta_v(D_n, P)`.
pub fn estimate_sym_diff(p: &SlabPolytope, samples: u64, seed: u64) -> Result<SymDiffEstimate> {
    validate_samples(samples)?;
    let geom = BallGeometry::new(p.n())?;
    let vol = geom.log_vol_n().exp();
    let power = p.n() as i32;
    let mut rng = stream_rng(seed, STREAM_SYM_DIFF);
    let mut u = vec![0.0; p.n() as usize];
    let mut acc = Welford::default();
    let mut clipped = 0u64;
    for _ in 0..samples {
        sample_direction_into(&mut rng, &mut u);
        let mut rho = p.radial(&u);
        if rho > RADIAL_CLIP {
            rho = RADIAL_CLIP;
            clipped += 1;
        }
        let (lo, hi) = if rho < 1.0 { (rho, 1.0) } else { (1.0, rho) };
        acc.push(vol * (hi.powi(power) - lo.powi(power)));
    }
    Ok(SymDiffEstimate {
        estimate: acc.estimate(seed),
        clipped,
    })
}

/// Surface area deviation estimate with every intermediate surface piece
/// exposed.
///
/// The sphere splits exactly into `|dD cap P|` and `|dD cap P^c|` by the
/// radial indicator. Because every facet lies at distance `t` from the
/// origin, the cone-volume identities
/// `n |D cup P| = t |dP cap D^c| + |dD cap P^c|` and
/// `n |D cap P| = t |dP cap D| + |dD cap P|`
/// recover the facet areas without sampling on facets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceDeviation {
    pub delta_s: Estimate,
    pub vol_union: Estimate,
    pub vol_intersection: Estimate,
    /// `|dD_n cap P|`
    pub sphere_inside: Estimate,
    /// `|dP cap D_n|`
    pub facet_inside: Estimate,
    /// `|dP cap D_n^c|`
    pub facet_outside: Estimate,
    pub clipped: u64,
}

pub fn estimate_surface_deviation(
    p: &SlabPolytope,
    samples: u64,
    seed: u64,
) -> Result<SurfaceDeviation> {
    validate_samples(samples)?;
    let geom = BallGeometry::new(p.n())?;
    let vol = geom.log_vol_n().exp();
    let nf = f64::from(p.n());
    let surf = nf * vol;
    let t = p.width();
    let power = p.n() as i32;

    let mut rng = stream_rng(seed, STREAM_SURFACE);
    let mut u = vec![0.0; p.n() as usize];
    let (mut acc_delta, mut acc_union, mut acc_inter, mut acc_inside) = (
        Welford::default(),
        Welford::default(),
        Welford::default(),
        Welford::default(),
    );
    let (mut acc_f_in, mut acc_f_out) = (Welford::default(), Welford::default());
    let mut clipped = 0u64;

    for _ in 0..samples {
        sample_direction_into(&mut rng, &mut u);
        let mut rho = p.radial(&u);
        if rho > RADIAL_CLIP {
            rho = RADIAL_CLIP;
            clipped += 1;
        }
        let inside = rho >= 1.0;
        let b = if inside { 1.0 } else { 0.0 };
        let rho_p = rho.powi(power);
        let (min_p, max_p) = if inside { (1.0, rho_p) } else { (rho_p, 1.0) };

        acc_union.push(vol * max_p);
        acc_inter.push(vol * min_p);
        acc_inside.push(surf * b);
        let f_in = surf * (min_p - b) / t;
        let f_out = surf * (max_p - (1.0 - b)) / t;
        acc_f_in.push(f_in);
        acc_f_out.push(f_out);
        // (|dP cap D^c| + |dD cap P^c|) - (|dP cap D| + |dD cap P|)
        acc_delta.push((f_out - f_in) + surf * (1.0 - 2.0 * b));
    }

    let facet_inside = acc_f_in.estimate(seed);
    let facet_outside = acc_f_out.estimate(seed);
    for (what, est) in [
        ("facet area inside the ball", &facet_inside),
        ("facet area outside the ball", &facet_outside),
    ] {
        if est.value < -3.0 * est.std_error {
            return Err(Error::InconsistentEstimate {
                what,
                value: est.value,
                std_error: est.std_error,
            });
        }
    }

    Ok(SurfaceDeviation {
        delta_s: acc_delta.estimate(seed),
        vol_union: acc_union.estimate(seed),
        vol_intersection: acc_inter.estimate(seed),
        sphere_inside: acc_inside.estimate(seed),
        facet_inside,
        facet_outside,
        clipped,
    })
}

/// Empirical counterpart of `alpha`: the frequency of `|<x, y>| >= t` over
/// uniform directions `y`, with `x` any fixed vector of norm `r`.
pub fn estimate_alpha(n: u32, r: f64, t: f64, samples: u64, seed: u64) -> Result<Estimate> {
    validate_samples(samples)?;
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfRange {
            name: "width",
            value: t,
            range: "(0, 1)",
        });
    }
    if !(r > 0.0) {
        return Err(Error::OutOfRange {
            name: "radius",
            value: r,
            range: "(0, inf)",
        });
    }
    let mut rng = stream_rng(seed, STREAM_ALPHA);
    let mut y = vec![0.0; n as usize];
    let mut acc = Welford::default();
    for _ in 0..samples {
        sample_direction_into(&mut rng, &mut y);
        // <x, y> = r * y_1 by rotation invariance.
        let exits = (r * y[0]).abs() >= t;
        acc.push(if exits { 1.0 } else { 0.0 });
    }
    Ok(acc.estimate(seed))
}
