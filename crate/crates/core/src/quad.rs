//! Adaptive quadrature on a 15-point Gauss–Kronrod rule.
//!
//! Panels are refined worst-error-first; the final value is accumulated in
//! interval order so results are deterministic regardless of refinement
//! history. Callers pass explicit breakpoints where the integrand changes
//! decay regime, which seeds the initial panel set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Kronrod abscissae (positive half), 15-point rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Weights of the embedded 7-point Gauss rule (odd Kronrod abscissae).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One 15-point Gauss–Kronrod evaluation over `[a, b]`.
///
/// Returns the Kronrod value and a conservative error estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let f_center = f(center);
    let mut kronrod = f_center * WGK[7];
    let mut gauss = f_center * WG[3];
    let mut res_abs = kronrod.abs();
    let mut values = [0.0f64; 14];

    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        values[2 * j] = f1;
        values[2 * j + 1] = f2;
        let sum = f1 + f2;
        kronrod += WGK[j] * sum;
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }

    let mean = kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((values[2 * j] - mean).abs() + (values[2 * j + 1] - mean).abs());
    }

    let err = ((kronrod - gauss) * half).abs();
    (
        kronrod * half,
        rescale_error(err, res_abs * half.abs(), res_asc * half.abs()),
    )
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    seq: u64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.seq == other.seq
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Worst error first; sequence number breaks ties deterministically.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub error_bound: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Integrate `f` over the interval spanned by `breakpoints` (sorted ascending).
///
/// Refinement stops once the summed error estimate drops below
/// `max(abs_tol, rel_tol * |value|)` or the evaluation budget is exhausted;
/// the `converged` flag records which happened.
pub fn integrate<F: Fn(f64) -> f64>(
    f: &F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_evals: usize,
) -> QuadOutcome {
    let mut heap: BinaryHeap<Panel> = BinaryHeap::new();
    let mut done: Vec<Panel> = Vec::new();
    let mut seq = 0u64;
    let mut evaluations = 0usize;

    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(hi > lo) {
            continue;
        }
        let (value, error) = gk15(f, lo, hi);
        evaluations += 15;
        heap.push(Panel {
            lo,
            hi,
            value,
            error,
            seq,
        });
        seq += 1;
    }

    let mut converged = true;
    loop {
        let total_value: f64 = heap.iter().map(|p| p.value).sum::<f64>()
            + done.iter().map(|p| p.value).sum::<f64>();
        let total_error: f64 = heap.iter().map(|p| p.error).sum::<f64>()
            + done.iter().map(|p| p.error).sum::<f64>();
        if total_error <= abs_tol.max(rel_tol * total_value.abs()) {
            break;
        }
        if evaluations >= max_evals {
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else {
            converged = false;
            break;
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // The panel cannot be split further in f64; keep its estimate.
            done.push(worst);
            continue;
        }
        for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
            let (value, error) = gk15(f, lo, hi);
            evaluations += 15;
            heap.push(Panel {
                lo,
                hi,
                value,
                error,
                seq,
            });
            seq += 1;
        }
    }

    let mut panels: Vec<Panel> = heap.into_vec();
    panels.extend(done);
    panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));

    let value: f64 = panels.iter().map(|p| p.value).sum();
    let error_bound: f64 = panels.iter().map(|p| p.error).sum();
    if !value.is_finite() {
        return QuadOutcome {
            value,
            error_bound: f64::INFINITY,
            evaluations,
            converged: false,
        };
    }
    QuadOutcome {
        value,
        error_bound,
        evaluations,
        converged,
    }
}
