//! The master expectation identity and its constants.
//!
//! For the random polytope cut from `N/2` independent slabs of half-width
//! `t`, Fubini plus polar coordinates give, exactly and for every admissible
//! `(n, N, t)`:
//!
//! ```text
//! E[vol(D \ P)] = |dD_n| * int_t^1    r^(n-1) (1 - (1-alpha)^(N/2)) dr
//! E[vol(P \ D)] = |dD_n| * int_1^inf  r^(n-1) (1-alpha)^(N/2)       dr
//! ```
//!
//! Both integrands are evaluated through the log-domain membership
//! probability, so facet budgets as large as `N = n^n` neither overflow nor
//! collapse. The improper tail is truncated only once the far-field floor on
//! `alpha` certifies the discarded mass is below tolerance.

use std::cell::Cell;
use std::f64::consts::{E, LN_2, PI};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    membership_log_value, AlphaEvaluator, ApproxParams, BallGeometry, TAIL_LOWER_BOUND_C,
};
use crate::quad::{self, QuadOutcome};

/// Quadrature tolerance, absolute, relative to the natural scale
/// `N^(-2/(n-1)) |D_n|`.
pub const QUAD_ABS_TOL_FACTOR: f64 = 1e-10;

/// Secondary relative tolerance for regimes where the expectation is huge.
pub const QUAD_REL_TOL: f64 = 1e-11;

/// Error-to-value ratio above which a breakdown is flagged unconverged.
pub const CONVERGENCE_RATIO: f64 = 1e-8;

const MAX_EVALS: usize = 400_000;

/// Expected volume exchange between the ball and the random polytope,
/// split into the deficit inside and the excess outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationBreakdown {
    /// E[vol(D_n \ P)] in volume units.
    pub inner_deficit: f64,
    /// E[vol(P \ D_n)] in volume units.
    pub outer_excess: f64,
    /// Their sum, exactly as stored.
    pub total: f64,
    /// total / (N^(-2/(n-1)) |D_n|).
    pub normalized: f64,
    /// total / |D_n|; stays representable in dimensions where the volume
    /// units underflow.
    pub over_ball: f64,
    /// Accumulated quadrature error estimate, volume units.
    pub quadrature_error_bound: f64,
    /// False when the error bound exceeds `CONVERGENCE_RATIO * total` or a
    /// node budget ran out.
    pub converged: bool,
}

/// One side of the expectation, in volume units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialExpectation {
    pub value: f64,
    pub error_bound: f64,
    pub converged: bool,
}

struct MembershipIntegrand {
    evaluator: AlphaEvaluator,
    log_facets: f64,
    nf: f64,
    failure: Cell<Option<Error>>,
}

impl MembershipIntegrand {
    fn new(geom: &BallGeometry, params: &ApproxParams) -> Result<Self> {
        Ok(Self {
            evaluator: AlphaEvaluator::new(geom, params.width())?,
            log_facets: params.log_facets(),
            nf: f64::from(params.n()),
            failure: Cell::new(None),
        })
    }

    fn membership_log(&self, r: f64) -> f64 {
        match self.evaluator.detail(r) {
            Ok(detail) => membership_log_value(self.log_facets, &detail),
            Err(e) => {
                if self.failure.take().is_none() {
                    self.failure.set(Some(e));
                }
                f64::NAN
            }
        }
    }

    /// r^(n-1) (1 - (1-alpha)^(N/2)), the deficit integrand.
    fn deficit(&self, r: f64) -> f64 {
        let m = self.membership_log(r);
        (-m.exp_m1()) * ((self.nf - 1.0) * r.ln()).exp()
    }

    /// r^(n-1) (1-alpha)^(N/2), the excess integrand.
    fn excess(&self, r: f64) -> f64 {
        let m = self.membership_log(r);
        let log = (self.nf - 1.0) * r.ln() + m;
        if log < -745.0 {
            0.0
        } else {
            log.exp()
        }
    }

    fn take_failure(&self) -> Option<Error> {
        self.failure.take()
    }
}

fn normalized_abs_tol(params: &ApproxParams) -> f64 {
    QUAD_ABS_TOL_FACTOR * params.approx_scale()
}

/// n * integral over [t, 1]; equals E[vol(D \ P)] / |D_n|.
fn normalized_inner(geom: &BallGeometry, params: &ApproxParams) -> Result<QuadOutcome> {
    let integrand = MembershipIntegrand::new(geom, params)?;
    let t = params.width();
    let delta = params.delta();
    let mut pts = vec![t, (1.0 - delta).clamp(t, 1.0), 1.0];
    pts.dedup_by(|a, b| a == b);
    let nf = f64::from(params.n());
    let out = quad::integrate(
        &|r| integrand.deficit(r),
        &pts,
        normalized_abs_tol(params) / nf,
        QUAD_REL_TOL,
        MAX_EVALS,
    );
    if let Some(e) = integrand.take_failure() {
        return Err(e);
    }
    Ok(QuadOutcome {
        value: nf * out.value,
        error_bound: nf * out.error_bound,
        evaluations: out.evaluations,
        converged: out.converged,
    })
}

/// ln of the certified bound on `n * int_R^inf r^(n-1) (1-alpha)^(N/2) dr`,
/// from `alpha >= 1 - C sqrt(n) / r` beyond `r = n^2`. `+inf` when the bound
/// cannot close at this `R`.
fn tail_bound_log(nf: f64, log_facets: f64, radius: f64) -> f64 {
    debug_assert!(radius >= nf * nf && radius > TAIL_LOWER_BOUND_C * nf.sqrt());
    let half_log = log_facets - LN_2;
    if half_log > 700.0 {
        // (C sqrt(n) / R)^(N/2) with C sqrt(n) / R < 1 and astronomically
        // large N: certified outright.
        return f64::NEG_INFINITY;
    }
    let half_n = half_log.exp();
    let decay = half_n - nf;
    if decay <= 1.0 {
        return f64::INFINITY;
    }
    let ratio_log = (TAIL_LOWER_BOUND_C * nf.sqrt()).ln() - radius.ln();
    nf.ln() + half_n * ratio_log + nf * radius.ln() - decay.ln()
}

/// n * integral over [1, inf); equals E[vol(P \ D)] / |D_n|.
fn normalized_outer(geom: &BallGeometry, params: &ApproxParams) -> Result<QuadOutcome> {
    let integrand = MembershipIntegrand::new(geom, params)?;
    let nf = f64::from(params.n());
    let abs_tol = normalized_abs_tol(params);
    let tail_tol = 0.5 * abs_tol;

    // Push the truncation radius out until the far-field bound certifies the
    // discarded tail.
    let mut radius = (nf * nf).max(9.0 * nf);
    let mut bound_log = tail_bound_log(nf, params.log_facets(), radius);
    let mut doublings = 0;
    while bound_log > tail_tol.ln() {
        radius *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::TailNotCertified {
                bound: bound_log.exp(),
                tolerance: tail_tol,
            });
        }
        bound_log = tail_bound_log(nf, params.log_facets(), radius);
    }
    let tail_bound = bound_log.exp();

    let scale = params.approx_scale();
    let mut pts = vec![
        1.0,
        1.0 + params.delta(),
        1.0 + 2.0 * scale,
        1.0 + 2.0 / nf,
        nf * nf,
        radius,
    ];
    pts.retain(|&p| p <= radius);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let out = quad::integrate(
        &|r| integrand.excess(r),
        &pts,
        abs_tol / nf,
        QUAD_REL_TOL,
        MAX_EVALS,
    );
    if let Some(e) = integrand.take_failure() {
        return Err(e);
    }
    Ok(QuadOutcome {
        value: nf * out.value,
        error_bound: nf * out.error_bound + tail_bound,
        evaluations: out.evaluations,
        converged: out.converged,
    })
}

/// E[vol(D_n \ P)] in volume units.
pub fn expected_inner_deficit(params: &ApproxParams) -> Result<PartialExpectation> {
    let geom = BallGeometry::new(params.n())?;
    let out = normalized_inner(&geom, params)?;
    let vol = geom.log_vol_n().exp();
    Ok(PartialExpectation {
        value: out.value * vol,
        error_bound: out.error_bound * vol,
        converged: out.converged,
    })
}

/// E[vol(P \ D_n)] in volume units. The improper tail is truncated only where
/// the far-field bound certifies the remainder; otherwise this fails with
/// `TailNotCertified`.
pub fn expected_outer_excess(params: &ApproxParams) -> Result<PartialExpectation> {
    let geom = BallGeometry::new(params.n())?;
    let out = normalized_outer(&geom, params)?;
    let vol = geom.log_vol_n().exp();
    Ok(PartialExpectation {
        value: out.value * vol,
        error_bound: out.error_bound * vol,
        converged: out.converged,
    })
}

/// E[Delta_v(D_n, P)] = E[vol(D \ P)] + E[vol(P \ D)].
///
/// The identity is exact for every even `N` and `t` in `(0, 1)`, not only in
/// the theorem regime; that exactness is the module's central testable
/// contract.
pub fn expected_sym_diff(params: &ApproxParams) -> Result<ExpectationBreakdown> {
    let geom = BallGeometry::new(params.n())?;
    let inner = normalized_inner(&geom, params)?;
    let outer = normalized_outer(&geom, params)?;

    let vol = geom.log_vol_n().exp();
    let inner_deficit = inner.value * vol;
    let outer_excess = outer.value * vol;
    let total = inner_deficit + outer_excess;

    let over_ball = inner.value + outer.value;
    let err_norm = inner.error_bound + outer.error_bound;
    let converged = inner.converged
        && outer.converged
        && err_norm <= (CONVERGENCE_RATIO * over_ball).max(normalized_abs_tol(params));

    Ok(ExpectationBreakdown {
        inner_deficit,
        outer_excess,
        total,
        normalized: over_ball / params.approx_scale(),
        over_ball,
        quadrature_error_bound: err_norm * vol,
        converged,
    })
}

/// The two limit integrals at the optimal rate constant, and the polytopal
/// approximation constants they pin down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateConstants {
    /// `int_0^1 t^-1 (1 - e^(-gamma* t)) dt`
    pub i: f64,
    /// `int_0^inf e^(-gamma* e^t) dt`
    pub ii: f64,
    /// Minimizer of I(gamma) + II(gamma); the root of `1 - 2 e^(-gamma)`.
    pub gamma_star: f64,
    /// `(I + II) / (pi e)`
    pub ldiv_upper: f64,
    /// `1 / (4 pi e)`
    pub ldiv_lower: f64,
}

/// `int_0^1 t^-1 (1 - e^(-gamma t)) dt` by quadrature.
pub fn integral_i(gamma: f64) -> f64 {
    let f = move |x: f64| {
        if x < 1e-12 {
            gamma * (1.0 - 0.5 * gamma * x)
        } else {
            -(-gamma * x).exp_m1() / x
        }
    };
    quad::integrate(&f, &[0.0, 1.0], 1e-14, 1e-13, 100_000).value
}

/// `int_0^inf e^(-gamma e^t) dt`, evaluated through the substitution
/// `u = e^t` as `int_1^inf e^(-gamma u) / u du`.
pub fn integral_ii(gamma: f64) -> f64 {
    let f = move |u: f64| (-gamma * u - u.ln()).exp();
    let upper = 760.0 / gamma;
    let mut pts = vec![1.0, (10.0 / gamma).max(2.0), (100.0 / gamma).max(4.0), upper];
    pts.retain(|&p| p <= upper);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    quad::integrate(&f, &pts, 1e-14, 1e-13, 100_000).value
}

fn compute_rate_constants() -> RateConstants {
    // d(I + II)/dgamma = (1 - 2 e^(-gamma)) / gamma is monotone on [0.1, 2];
    // bisect for its root.
    let g = |x: f64| 1.0 - 2.0 * (-x).exp();
    let (mut lo, mut hi) = (0.1f64, 2.0f64);
    debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma_star = 0.5 * (lo + hi);
    let i = integral_i(gamma_star);
    let ii = integral_ii(gamma_star);
    RateConstants {
        i,
        ii,
        gamma_star,
        ldiv_upper: (i + ii) / (PI * E),
        ldiv_lower: 1.0 / (4.0 * PI * E),
    }
}

/// Rate constants at the optimal `gamma`; computed once and cached.
pub fn rate_constants() -> RateConstants {
    static CACHE: OnceLock<RateConstants> = OnceLock::new();
    *CACHE.get_or_init(compute_rate_constants)
}

/// Result of the numerical width search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthOptimum {
    pub width: f64,
    pub value: f64,
    pub converged: bool,
}

/// Golden-section minimization of `expected_sym_diff` over the width, to an
/// absolute width resolution of 1e-6.
pub fn optimize_width(n: u32, log_facets: f64) -> Result<WidthOptimum> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let eval = |t: f64| -> (f64, bool) {
        match ApproxParams::new(n, log_facets, LN_2, t).and_then(|p| expected_sym_diff(&p)) {
            Ok(b) => (b.total, b.converged),
            Err(_) => (f64::INFINITY, false),
        }
    };

    let mut lo = 0.02f64;
    let mut hi = 1.0 - 1e-9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut ok_a) = eval(a);
    let (mut fb, mut ok_b) = eval(b);
    let mut all_converged = ok_a && ok_b;

    for _ in 0..200 {
        if hi - lo < 1e-6 {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            (fa, ok_a) = eval(a);
            all_converged &= ok_a;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            (fb, ok_b) = eval(b);
            all_converged &= ok_b;
        }
    }
    if hi - lo >= 1e-6 {
        return Err(Error::SearchNotConverged);
    }
    let width = 0.5 * (lo + hi);
    let (value, ok) = eval(width);
    if !value.is_finite() {
        return Err(Error::SearchNotConverged);
    }
    Ok(WidthOptimum {
        width,
        value,
        converged: all_converged && ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Frozen with mpmath at 50 digits.
    const EIN_LN2: f64 = 0.5893737873809565;
    const E1_LN2: f64 = 0.3786710430610880;
    const TOTAL_4_64_08: f64 = 2.0788104724432640;
    const INNER_4_64_08: f64 = 2.0482038134942891;
    const OUTER_4_64_08: f64 = 0.030606658948974903;
    const TOTAL_4_1E4: f64 = 0.028489371795160742;

    /// Series oracle for `int_0^1 t^-1 (1 - e^(-x t)) dt`:
    /// sum over k >= 1 of (-1)^(k+1) x^k / (k k!).
    fn ein_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= x / kf;
            let contrib = if k % 2 == 1 { term / kf } else { -term / kf };
            sum += contrib;
            if term / kf < 1e-18 {
                break;
            }
        }
        sum
    }

    const EULER_MASCHERONI: f64 = 0.5772156649015329;

    fn e1_series(x: f64) -> f64 {
        ein_series(x) - EULER_MASCHERONI - x.ln()
    }

    #[test]
    fn rate_constants_match_series_oracles() {
        let rc = rate_constants();
        assert_relative_eq!(rc.gamma_star, LN_2, epsilon = 1e-10);
        assert_relative_eq!(rc.i, ein_series(LN_2), max_relative = 1e-11);
        assert_relative_eq!(rc.ii, e1_series(LN_2), max_relative = 1e-11);
        assert_relative_eq!(rc.i, EIN_LN2, max_relative = 1e-12);
        assert_relative_eq!(rc.ii, E1_LN2, max_relative = 1e-12);
        // Loose band quoted for the sum.
        assert!((rc.i + rc.ii - 0.9678).abs() < 1e-3);
        assert_relative_eq!(
            rc.ldiv_lower,
            1.0 / (4.0 * PI * E),
            epsilon = 1e-15
        );
        assert!(rc.ldiv_lower <= rc.ldiv_upper);
    }

    #[test]
    fn frozen_breakdown_far_from_theorem_regime() {
        let params = ApproxParams::new(4, 64f64.ln(), LN_2, 0.8).unwrap();
        let b = expected_sym_diff(&params).unwrap();
        assert!(b.converged);
        assert_relative_eq!(b.inner_deficit, INNER_4_64_08, max_relative = 1e-9);
        assert_relative_eq!(b.outer_excess, OUTER_4_64_08, max_relative = 1e-9);
        assert_relative_eq!(b.total, TOTAL_4_64_08, max_relative = 1e-9);
        assert_eq!(b.total, b.inner_deficit + b.outer_excess);
        assert!(b.quadrature_error_bound <= CONVERGENCE_RATIO * b.total);
    }

    #[test]
    fn frozen_breakdown_analytic_width() {
        let params = ApproxParams::with_analytic_width(4, 1e4f64.ln(), LN_2).unwrap();
        let b = expected_sym_diff(&params).unwrap();
        assert!(b.converged);
        assert_relative_eq!(b.total, TOTAL_4_1E4, max_relative = 1e-9);
    }

    #[test]
    fn parts_agree_with_breakdown() {
        let params = ApproxParams::new(4, 64f64.ln(), LN_2, 0.8).unwrap();
        let inner = expected_inner_deficit(&params).unwrap();
        let outer = expected_outer_excess(&params).unwrap();
        let b = expected_sym_diff(&params).unwrap();
        assert_eq!(inner.value, b.inner_deficit);
        assert_eq!(outer.value, b.outer_excess);
    }

    #[test]
    fn inner_vanishes_as_width_closes() {
        let params = ApproxParams::new(3, 1e4f64.ln(), LN_2, 1.0 - 1e-9).unwrap();
        let inner = expected_inner_deficit(&params).unwrap();
        assert!(inner.value < 1e-8, "inner = {}", inner.value);
    }

    #[test]
    fn outer_vanishes_when_every_point_exits() {
        // Tiny width, huge budget: (1 - alpha)^(N/2) is negligible past r = 1.
        let params = ApproxParams::new(2, 1e6f64.ln(), LN_2, 0.01).unwrap();
        let outer = expected_outer_excess(&params).unwrap();
        assert!(outer.value < 1e-30, "outer = {}", outer.value);
    }

    #[test]
    fn limit_constants_in_theorem_regime() {
        // n = 30, N = n^n: the two parts approach I and II.
        let n = 30u32;
        let log_facets = 30.0 * 30f64.ln();
        let params = ApproxParams::with_analytic_width(n, log_facets, LN_2).unwrap();
        let vol = BallGeometry::new(n).unwrap().log_vol_n().exp();
        let scale = params.approx_scale() * vol;
        let inner = expected_inner_deficit(&params).unwrap().value / scale;
        let outer = expected_outer_excess(&params).unwrap().value / scale;
        assert!((inner - EIN_LN2).abs() < 0.15, "inner normalized = {inner}");
        assert!((outer - E1_LN2).abs() < 0.15, "outer normalized = {outer}");
    }

    #[test]
    fn total_decreases_with_budget() {
        let mut last = f64::INFINITY;
        for k in [5.0, 6.0, 7.0] {
            let params =
                ApproxParams::with_analytic_width(5, k * 10f64.ln(), LN_2).unwrap();
            let total = expected_sym_diff(&params).unwrap().total;
            assert!(total < last);
            last = total;
        }
    }

    #[test]
    fn width_search_beats_analytic_width() {
        let opt = optimize_width(4, 64f64.ln()).unwrap();
        let analytic = ApproxParams::with_analytic_width(4, 64f64.ln(), LN_2).unwrap();
        let at_analytic = expected_sym_diff(&analytic).unwrap().total;
        assert!(opt.value <= at_analytic * (1.0 + 1e-6));
    }

    #[test]
    fn width_search_tracks_analytic_choice_in_regime() {
        let n = 30u32;
        let log_facets = 30.0 * 30f64.ln();
        let opt = optimize_width(n, log_facets).unwrap();
        let analytic = slab_width_for(n, log_facets);
        assert!(
            (opt.width - analytic).abs() <= 2.0 * (1.0 - analytic),
            "opt {} vs analytic {}",
            opt.width,
            analytic
        );
    }

    #[test]
    fn width_search_approaches_one_for_large_budgets() {
        let t6 = optimize_width(3, 1e6f64.ln()).unwrap().width;
        let t10 = optimize_width(3, 1e10f64.ln()).unwrap().width;
        assert!(t10 > t6);
        assert!(t10 > 0.999);
    }

    fn slab_width_for(n: u32, log_facets: f64) -> f64 {
        let geom = BallGeometry::new(n).unwrap();
        crate::geometry::slab_width(&geom, log_facets, LN_2).unwrap()
    }
}
