//! Special functions, quadrature, root finding and small optimisers used by
//! the samplers, the fits and the closed-form references.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("no sign change of the function on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("quadrature did not reach tolerance {tolerance:e}: error estimate {estimate:e}")]
    Quadrature { tolerance: f64, estimate: f64 },
    #[error("function returned a non-finite value at {0}")]
    NonFinite(f64),
}

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (k, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + k as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        ln_gamma(x).exp()
    }
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..10_000 {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation.
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = half * GK_NODES[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += KRONROD_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Integrable endpoint singularities are handled by repeated bisection of the
/// offending interval; nodes never touch the endpoints themselves.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tolerance: f64,
) -> Result<f64, NumericError> {
    use std::collections::BinaryHeap;

    if a == b {
        return Ok(0.0);
    }
    let piece = |lo: f64, hi: f64| {
        let (value, error) = gauss_kronrod(&f, lo, hi);
        Piece { lo, hi, value, error }
    };
    let mut heap = BinaryHeap::new();
    heap.push(piece(a, b));
    let sums = |heap: &BinaryHeap<Piece>| {
        heap.iter().fold((0.0, 0.0), |(s, e), p| (s + p.value, e + p.error))
    };
    let (mut total, mut error) = sums(&heap);
    for iteration in 0..20_000 {
        if !total.is_finite() {
            return Err(NumericError::NonFinite(total));
        }
        if error <= tolerance.max(1e-15 * total.abs()) {
            // Re-sum from scratch so the running totals' rounding does not
            // leak into the result.
            let (t, e) = sums(&heap);
            if e <= tolerance.max(1e-15 * t.abs()) {
                return Ok(t);
            }
            (total, error) = (t, e);
        }
        if iteration % 1000 == 999 {
            (total, error) = sums(&heap);
        }
        let worst = heap.pop().expect("at least one interval");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval can no longer be split; accept what we have.
            error -= worst.error;
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        let left = piece(worst.lo, mid);
        let right = piece(mid, worst.hi);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    let (total, error) = sums(&heap);
    if error <= 1e3 * tolerance {
        Ok(total)
    } else {
        Err(NumericError::Quadrature { tolerance, estimate: error })
    }
}

/// Bisection for a root of `f` in `[lo, hi]`; `f(lo)` and `f(hi)` must differ
/// in sign.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tolerance: f64,
) -> Result<f64, NumericError> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if !f_lo.is_finite() {
        return Err(NumericError::NonFinite(lo));
    }
    if !f_hi.is_finite() {
        return Err(NumericError::NonFinite(hi));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(NumericError::NoBracket { lo, hi });
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if !f_mid.is_finite() {
            return Err(NumericError::NonFinite(mid));
        }
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
pub fn minimize_scalar<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tolerance: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tolerance {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Result of a Nelder-Mead minimisation.
#[derive(Debug, Clone)]
pub struct Simplex<const D: usize> {
    pub point: [f64; D],
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead downhill simplex for small dimension `D`.
pub fn nelder_mead<const D: usize, F: Fn(&[f64; D]) -> f64>(
    f: F,
    start: [f64; D],
    step: [f64; D],
    tolerance: f64,
    max_iterations: usize,
) -> Simplex<D> {
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    simplex.push((start, f(&start)));
    for d in 0..D {
        let mut p = start;
        p[d] += step[d];
        simplex.push((p, f(&p)));
    }
    let value_of = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    for s in simplex.iter_mut() {
        s.1 = value_of(s.1);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[D].1;
        if (worst - best).abs() <= tolerance * (best.abs() + tolerance) {
            converged = true;
            break;
        }
        let mut centroid = [0.0; D];
        for (p, _) in &simplex[..D] {
            for d in 0..D {
                centroid[d] += p[d] / D as f64;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; D];
            for d in 0..D {
                p[d] = centroid[d] + t * (simplex[D].0[d] - centroid[d]);
            }
            p
        };
        let reflected = along(-1.0);
        let fr = value_of(f(&reflected));
        if fr < best {
            let expanded = along(-2.0);
            let fe = value_of(f(&expanded));
            simplex[D] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (reflected, fr);
        } else {
            let contracted = if fr < worst { along(-0.5) } else { along(0.5) };
            let fc = value_of(f(&contracted));
            if fc < worst.min(fr) {
                simplex[D] = (contracted, fc);
            } else {
                let anchor = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    for d in 0..D {
                        s.0[d] = anchor[d] + 0.5 * (s.0[d] - anchor[d]);
                    }
                    s.1 = value_of(f(&s.0));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Simplex { point: simplex[0].0, value: simplex[0].1, iterations, converged }
}
