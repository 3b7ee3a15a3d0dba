//! Ball volumes, spherical caps, and the slab exit probability.
//!
//! A two-sided slab of half-width `t` with unit normal `y` is the set
//! `{x : |<x, y>| <= t}`; it contributes two parallel facets. For a point at
//! radius `r`, `alpha(n, r, t)` is the probability that the point leaves a
//! slab with uniformly random normal. The probability splits into a spherical
//! cap and a cone over the same base disk, and both pieces are kept in the
//! log domain so that exit probabilities far below `1e-300` stay usable.
//!
//! Complements are never formed by subtracting from 1 at small scales:
//! `1 - alpha` has its own direct evaluation through the lower cap integral,
//! which is what keeps `(1 - alpha)^(N/2)` meaningful for `N = n^n`.

use crate::error::{Error, Result};
use crate::quad;
use crate::special::{betainc_cf, ln_beta};

use std::f64::consts::{LN_2, PI};

/// Tolerance for floating-point excursions of `alpha` above 1; anything
/// larger is treated as a genuine defect rather than rounding.
pub const ALPHA_CLAMP_TOL: f64 = 1e-12;

/// Implementation constant `C` in the far-field bound `alpha >= 1 - C sqrt(n) / r`.
pub const TAIL_LOWER_BOUND_C: f64 = 3.0;

/// Required relative agreement between the two cap-integral evaluation paths.
pub const CAP_PATH_AGREEMENT_TOL: f64 = 1e-11;

/// Implementation constant `C` in the cap-vs-cone dominance check
/// `cap <= (C / n^2) * cone` near the unit sphere in the `N >= n^n` regime.
pub const CAP_DOMINANCE_C: f64 = 10.0;

/// log of the volume of the n-dimensional unit ball, `pi^(n/2) / Gamma(n/2 + 1)`.
pub fn ball_log_volume(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    let nf = f64::from(n);
    Ok(0.5 * nf * PI.ln() - crate::special::ln_gamma(0.5 * nf + 1.0))
}

/// Dimension together with the log-volumes every formula needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallGeometry {
    n: u32,
    log_vol_n: f64,
    log_vol_n_minus_1: f64,
    log_surf_n: f64,
}

impl BallGeometry {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall { min: 2, got: n });
        }
        let log_vol_n = ball_log_volume(n)?;
        let log_vol_n_minus_1 = ball_log_volume(n - 1)?;
        Ok(Self {
            n,
            log_vol_n,
            log_vol_n_minus_1,
            log_surf_n: f64::from(n).ln() + log_vol_n,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn log_vol_n(&self) -> f64 {
        self.log_vol_n
    }

    pub fn log_vol_n_minus_1(&self) -> f64 {
        self.log_vol_n_minus_1
    }

    pub fn log_surf_n(&self) -> f64 {
        self.log_surf_n
    }
}

/// Full parameterization of one slab-construction experiment.
///
/// The facet budget `N` is carried as `log_facets = ln N` so that regimes
/// like `N = n^n` stay representable for every dimension; only Monte Carlo
/// realization requires `N` to be an actual even integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    n: u32,
    log_facets: f64,
    gamma: f64,
    width: f64,
}

impl ApproxParams {
    pub fn new(n: u32, log_facets: f64, gamma: f64, width: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall { min: 2, got: n });
        }
        if !(width > 0.0 && width < 1.0) {
            return Err(Error::OutOfRange {
                name: "width",
                value: width,
                range: "(0, 1)",
            });
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma,
                range: "(0, inf)",
            });
        }
        if !log_facets.is_finite() || log_facets < (2.0 * f64::from(n)).ln() {
            return Err(Error::OutOfRange {
                name: "log_facets",
                value: log_facets,
                range: "[ln(2n), inf)",
            });
        }
        Ok(Self {
            n,
            log_facets,
            gamma,
            width,
        })
    }

    /// Parameters with the width fixed by `slab_width` for the given budget.
    pub fn with_analytic_width(n: u32, log_facets: f64, gamma: f64) -> Result<Self> {
        let geom = BallGeometry::new(n)?;
        let width = slab_width(&geom, log_facets, gamma)?;
        Self::new(n, log_facets, gamma, width)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn log_facets(&self) -> f64 {
        self.log_facets
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// The natural approximation scale `N^(-2/(n-1))`.
    pub fn approx_scale(&self) -> f64 {
        (-2.0 * self.log_facets / (f64::from(self.n) - 1.0)).exp()
    }

    /// Half-width of the radial window around 1, `(n-1)^(-1/2) N^(-2/(n-1))`.
    pub fn delta(&self) -> f64 {
        self.approx_scale() / (f64::from(self.n) - 1.0).sqrt()
    }

    /// Residual of the analytic-width identity `t^2 + (gamma |dD_n| / (N |D_{n-1}|))^[2/(n-1)] - 1`.
    pub fn analytic_width_residual(&self, geom: &BallGeometry) -> f64 {
        let radicand = ((2.0 / (f64::from(self.n) - 1.0))
            * (self.gamma.ln() + geom.log_surf_n() - self.log_facets - geom.log_vol_n_minus_1()))
        .exp();
        self.width * self.width + radicand - 1.0
    }
}

/// Slab half-width `t` solving `alpha(n, 1, t) ~ 2 gamma / N`.
pub fn slab_width(geom: &BallGeometry, log_facets: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: gamma,
            range: "(0, inf)",
        });
    }
    let nf = f64::from(geom.n());
    let radicand = 1.0
        - ((2.0 / (nf - 1.0))
            * (gamma.ln() + geom.log_surf_n() - log_facets - geom.log_vol_n_minus_1()))
        .exp();
    if radicand <= 0.0 {
        return Err(Error::FacetBudgetTooSmall { radicand });
    }
    Ok(radicand.sqrt())
}

fn validate_width(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfRange {
            name: "width",
            value: t,
            range: "(0, 1)",
        });
    }
    Ok(())
}

fn validate_cap_lower_limit(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::OutOfRange {
            name: "cap lower limit",
            value: a,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Shared per-dimension pieces of the cap integral
/// `int_a^1 (1 - x^2)^((n-1)/2) dx = (1/2) B(1/2, (n+1)/2) I_{1-a^2}((n+1)/2, 1/2)`.
#[derive(Debug, Clone, Copy)]
struct CapKernel {
    p: f64,
    half_nm1: f64,
    ln_b: f64,
}

impl CapKernel {
    fn new(n: u32) -> Self {
        let nf = f64::from(n);
        let p = 0.5 * (nf + 1.0);
        Self {
            p,
            half_nm1: 0.5 * (nf - 1.0),
            ln_b: ln_beta(p, 0.5),
        }
    }

    /// True when `a^2` lies on the direct continued-fraction branch for the
    /// lower cap; the upper cap then takes the complementary branch.
    fn small_a(&self, a: f64) -> bool {
        a * a < 1.5 / (self.p + 2.5)
    }

    /// Upper and lower cap integrals at `a`, with `y = 1 - a^2` supplied by
    /// the caller so radial cancellation is handled upstream. Returns
    /// `(log_cap, cap, lower)`; `cap` may underflow to zero while `log_cap`
    /// stays finite.
    fn caps(&self, a: f64, y: f64, ln_y: f64) -> Result<(f64, f64, f64)> {
        let half_b = 0.5 * self.ln_b.exp();
        if a <= 0.0 {
            return Ok((half_b.ln(), half_b, 0.0));
        }
        if a >= 1.0 {
            return Ok((f64::NEG_INFINITY, 0.0, half_b));
        }
        // y^p = exp(half_nm1 * ln y) * y
        let log_yp = self.half_nm1 * ln_y + ln_y;
        if self.small_a(a) {
            let f = betainc_cf(0.5, self.p, a * a)?;
            let lower = a * log_yp.exp() * f;
            let cap = half_b - lower;
            Ok((cap.ln(), cap, lower))
        } else {
            let f = betainc_cf(self.p, 0.5, y)?;
            let log_cap = a.ln() + log_yp + f.ln() - (2.0 * self.p).ln();
            let cap = log_cap.exp();
            let lower = half_b - cap;
            Ok((log_cap, cap, lower))
        }
    }
}

/// `int_a^1 (1 - x^2)^((n-1)/2) dx` via the regularized incomplete beta.
pub fn cap_integral(n: u32, a: f64) -> Result<f64> {
    Ok(cap_integral_log(n, a)?.exp())
}

/// Log of the cap integral; finite whenever `a < 1`.
pub fn cap_integral_log(n: u32, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    validate_cap_lower_limit(a)?;
    let kernel = CapKernel::new(n);
    let y = (1.0 - a) * (1.0 + a);
    let (log_cap, _, _) = kernel.caps(a, y, y.ln())?;
    Ok(log_cap)
}

/// Independent evaluation path for the cap integral: adaptive quadrature of
/// the raw integrand. Kept separate from the beta route so the two can be
/// cross-checked.
pub fn cap_integral_quadrature(n: u32, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::DimensionTooSmall { min: 1, got: 0 });
    }
    validate_cap_lower_limit(a)?;
    if a >= 1.0 {
        return Ok(0.0);
    }
    let half_nm1 = 0.5 * (f64::from(n) - 1.0);
    let f = move |x: f64| {
        if half_nm1 == 0.0 {
            1.0
        } else {
            (half_nm1 * (-x * x).ln_1p()).exp()
        }
    };
    // Concentrate initial panels on the decay scale at the left endpoint.
    let mut pts = vec![a];
    if a > 0.0 {
        let scale = (1.0 - a * a) / ((f64::from(n) - 1.0).max(1.0) * a);
        let mut s = 5.0 * scale;
        while s < 1.0 - a {
            pts.push(a + s);
            s *= 4.0;
        }
    } else {
        let w = 3.0 / (f64::from(n).sqrt());
        if w < 1.0 {
            pts.push(w);
        }
    }
    pts.push(1.0);
    let out = quad::integrate(&f, &pts, 0.0, 5e-13, 100_000);
    if !out.converged {
        return Err(Error::Unconverged {
            value: out.value,
            error_bound: out.error_bound,
        });
    }
    Ok(out.value)
}

/// Evaluates both cap-integral paths and errors if they disagree beyond
/// `CAP_PATH_AGREEMENT_TOL` relative.
pub fn cap_integral_checked(n: u32, a: f64) -> Result<f64> {
    let beta_path = cap_integral(n, a)?;
    let quad_path = cap_integral_quadrature(n, a)?;
    let scale = beta_path.abs().max(quad_path.abs());
    let diff = (beta_path - quad_path).abs();
    if diff > CAP_PATH_AGREEMENT_TOL * scale + 1e-300 {
        return Err(Error::PathDisagreement {
            first: beta_path,
            second: quad_path,
            relative: diff / scale,
        });
    }
    Ok(beta_path)
}

/// Exit probability in both log forms: `log_alpha = ln alpha` and
/// `log_complement = ln(1 - alpha)`, each computed on its own
/// well-conditioned branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaValue {
    pub log_alpha: f64,
    pub log_complement: f64,
}

impl AlphaValue {
    pub fn value(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn complement(&self) -> f64 {
        self.log_complement.exp()
    }
}

/// Reusable evaluator for `alpha(n, r, t)` at fixed `(n, t)`; amortizes the
/// log-gamma work across the many radii a quadrature visits.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AlphaEvaluator {
    nf: f64,
    width: f64,
    kernel: CapKernel,
    /// ln(2 |D_{n-1}| / |D_n|)
    ln_two_ratio: f64,
}

impl AlphaEvaluator {
    pub(crate) fn new(geom: &BallGeometry, width: f64) -> Result<Self> {
        validate_width(width)?;
        Ok(Self {
            nf: f64::from(geom.n()),
            width,
            kernel: CapKernel::new(geom.n()),
            ln_two_ratio: LN_2 + geom.log_vol_n_minus_1() - geom.log_vol_n(),
        })
    }

    /// Log of cap and cone contributions at radius `r` (before the common
    /// `2 |D_{n-1}| / |D_n|` factor).
    pub(crate) fn split_log(&self, r: f64) -> Result<(f64, f64)> {
        let t = self.width;
        if r <= t {
            return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY));
        }
        let a = t / r;
        let y = ((r - t) / r) * ((r + t) / r);
        let ln_y = y.ln();
        let (log_cap, _, _) = self.kernel.caps(a, y, ln_y)?;
        let log_cone = t.ln() - (self.nf * r).ln() + self.kernel.half_nm1 * ln_y;
        Ok((log_cap, log_cone))
    }

    pub(crate) fn detail(&self, r: f64) -> Result<AlphaValue> {
        if !(r > 0.0) {
            return Err(Error::OutOfRange {
                name: "radius",
                value: r,
                range: "(0, inf)",
            });
        }
        let t = self.width;
        if r <= t {
            return Ok(AlphaValue {
                log_alpha: f64::NEG_INFINITY,
                log_complement: 0.0,
            });
        }
        let a = t / r;
        let y = ((r - t) / r) * ((r + t) / r);
        let ln_y = y.ln();
        let (log_cap, _, lower) = self.kernel.caps(a, y, ln_y)?;
        let log_cone = t.ln() - (self.nf * r).ln() + self.kernel.half_nm1 * ln_y;

        // logsumexp of the two contributions
        let (hi, lo) = if log_cap >= log_cone {
            (log_cap, log_cone)
        } else {
            (log_cone, log_cap)
        };
        let mut log_alpha = if hi == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.ln_two_ratio + hi + (lo - hi).exp().ln_1p()
        };
        if log_alpha > 0.0 {
            let excess = log_alpha.exp() - 1.0;
            if excess > ALPHA_CLAMP_TOL {
                return Err(Error::ClampViolation { excess });
            }
            log_alpha = 0.0;
        }

        let alpha = log_alpha.exp();
        let log_complement = if alpha <= 0.5 {
            (-alpha).ln_1p()
        } else {
            // Direct complement: 1 - alpha = (2 |D_{n-1}| / |D_n|) (lower_cap - cone).
            let cone = (t / (self.nf * r)) * (self.kernel.half_nm1 * ln_y).exp();
            let diff = lower - cone;
            if diff <= 0.0 {
                f64::NEG_INFINITY
            } else {
                self.ln_two_ratio + diff.ln()
            }
        };
        Ok(AlphaValue {
            log_alpha,
            log_complement,
        })
    }
}

/// Probability that a point at radius `r` lies outside one random two-sided
/// slab of half-width `t`, clamped to `[0, 1]`.
pub fn alpha(geom: &BallGeometry, r: f64, t: f64) -> Result<f64> {
    Ok(alpha_detail(geom, r, t)?.value())
}

/// `alpha` with both `ln alpha` and `ln(1 - alpha)` exposed.
pub fn alpha_detail(geom: &BallGeometry, r: f64, t: f64) -> Result<AlphaValue> {
    AlphaEvaluator::new(geom, t)?.detail(r)
}

/// Log of the cap and cone shares of `alpha` (including the common
/// normalization factor), for dominance diagnostics.
pub fn alpha_cap_cone_log(geom: &BallGeometry, r: f64, t: f64) -> Result<(f64, f64)> {
    let ev = AlphaEvaluator::new(geom, t)?;
    let (log_cap, log_cone) = ev.split_log(r)?;
    Ok((ev.ln_two_ratio + log_cap, ev.ln_two_ratio + log_cone))
}

/// `(N/2) ln(1 - alpha)` assembled from whichever log form of `alpha` is
/// well scaled, stable for any facet budget carried in `log_facets`.
pub(crate) fn membership_log_value(log_facets: f64, alpha: &AlphaValue) -> f64 {
    if alpha.log_alpha == f64::NEG_INFINITY {
        return 0.0;
    }
    if alpha.log_alpha < -37.0 {
        // Below alpha = 1e-16 the expansion -ln(1-alpha) = alpha (1 + ...)
        // is exact to working precision; ln(1-alpha) itself would underflow
        // long before alpha does.
        return -(log_facets - LN_2 + alpha.log_alpha).exp();
    }
    let log_complement = alpha.log_complement;
    if log_complement == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let half_log = log_facets - LN_2;
    if half_log < 700.0 {
        half_log.exp() * log_complement
    } else {
        -(half_log + (-log_complement).ln()).exp()
    }
}

/// ln Pr(point at radius `r` lies in the random polytope) = `(N/2) ln(1 - alpha)`.
///
/// Exactly 0 for `r <= t`; never overflows or collapses prematurely even for
/// `N = n^n`.
pub fn membership_log_prob(geom: &BallGeometry, params: &ApproxParams, r: f64) -> Result<f64> {
    let detail = alpha_detail(geom, r, params.width())?;
    Ok(membership_log_value(params.log_facets(), &detail))
}

/// Leading-order approximation of `alpha` near the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticAlpha {
    pub log_value: f64,
    /// Whether `r` lies in the validity window `[1 - delta, 1 + delta]`.
    pub in_window: bool,
}

impl AsymptoticAlpha {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `(2 gamma / N) exp((n-1)(r-1) N^(2/(n-1)))` with all correction factors
/// set to 1; exposed for validation against the exact `alpha`.
pub fn alpha_asymptotic(params: &ApproxParams, r: f64) -> AsymptoticAlpha {
    let nf = f64::from(params.n());
    let growth = (2.0 * params.log_facets() / (nf - 1.0)).exp();
    let log_value = (2.0 * params.gamma()).ln() - params.log_facets() + (nf - 1.0) * (r - 1.0) * growth;
    AsymptoticAlpha {
        log_value,
        in_window: (r - 1.0).abs() <= params.delta(),
    }
}

/// Far-field floor `max(0, 1 - C sqrt(n) / r)` for `alpha`, valid for `r >= n^2`.
pub fn alpha_tail_lower_bound(geom: &BallGeometry, r: f64, t: f64) -> Result<f64> {
    validate_width(t)?;
    let nf = f64::from(geom.n());
    if r < nf * nf {
        return Err(Error::OutOfRange {
            name: "radius",
            value: r,
            range: "[n^2, inf)",
        });
    }
    Ok((1.0 - TAIL_LOWER_BOUND_C * nf.sqrt() / r).max(0.0))
}

/// Laplace-type leading term `(1 - a^2)^((n+1)/2) / (a (n - 1))` of the cap
/// integral, for `a` in `(2/3, 1)`.
pub fn cap_leading_term(n: u32, a: f64) -> Result<f64> {
    Ok(cap_leading_term_log(n, a)?.exp())
}

/// Log-domain form of `cap_leading_term`.
pub fn cap_leading_term_log(n: u32, a: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    if !(a > 2.0 / 3.0 && a < 1.0) {
        return Err(Error::OutOfRange {
            name: "cap lower limit",
            value: a,
            range: "(2/3, 1)",
        });
    }
    let nf = f64::from(n);
    let y = (1.0 - a) * (1.0 + a);
    Ok(0.5 * (nf + 1.0) * y.ln() - a.ln() - (nf - 1.0).ln())
}
