//! Gamma-form fits `P(m) = C m^alpha exp(-m/T)` by binned maximum likelihood.

use super::histogram::DistributionEstimate;
use super::{Estimate, FitResult, Goodness, StatsError};
use crate::numeric::{gamma_p, gamma_q, minimize_scalar, nelder_mead};

/// Asymptotic two-sided 1% Kolmogorov-Smirnov critical value.
pub fn ks_critical_1pct(samples: u64) -> f64 {
    (-0.5 * (0.005f64).ln()).sqrt() / (samples as f64).sqrt()
}

/// Probability that a Gamma(shape, scale) variate falls in `[x0, x1)`.
fn bin_probability(shape: f64, scale: f64, x0: f64, x1: f64) -> f64 {
    let (a, b) = (x0 / scale, x1 / scale);
    let p = if a > shape {
        gamma_q(shape, a) - gamma_q(shape, b)
    } else {
        gamma_p(shape, b) - gamma_p(shape, a)
    };
    p.max(1e-300)
}

fn negative_log_likelihood(e: &DistributionEstimate, shape: f64, scale: f64) -> f64 {
    let edges = &e.binning.edges;
    let mut nll = 0.0;
    if e.underflow > 0 {
        nll -= e.underflow as f64 * bin_probability(shape, scale, 0.0, edges[0]).ln();
    }
    for (k, &c) in e.counts.iter().enumerate() {
        if c > 0 {
            nll -= c as f64 * bin_probability(shape, scale, edges[k], edges[k + 1]).ln();
        }
    }
    if e.overflow > 0 {
        let last = edges[edges.len() - 1];
        nll -= e.overflow as f64 * gamma_q(shape, last / scale).max(1e-300).ln();
    }
    nll
}

fn ks_statistic(e: &DistributionEstimate, cdf: impl Fn(f64) -> f64) -> f64 {
    let total = e.total as f64;
    let mut below = e.underflow as f64;
    let mut worst: f64 = 0.0;
    for (k, &edge) in e.binning.edges.iter().enumerate() {
        worst = worst.max((below / total - cdf(edge)).abs());
        if k < e.counts.len() {
            below += e.counts[k] as f64;
        }
    }
    worst
}

fn binned_mean_var(e: &DistributionEstimate) -> (f64, f64) {
    let m1 = e.binned_raw_moment(1);
    let m2 = e.binned_raw_moment(2);
    (m1, (m2 - m1 * m1).max(1e-300))
}

/// Inverse of a symmetric 2x2 Hessian of the negative log-likelihood in
/// `(alpha, T)`, by central differences.
fn covariance(e: &DistributionEstimate, alpha: f64, t: f64) -> Option<[[f64; 2]; 2]> {
    let f = |a: f64, s: f64| negative_log_likelihood(e, a + 1.0, s);
    let ha = 1e-4 * (1.0 + alpha.abs());
    let ht = 1e-4 * t;
    let f0 = f(alpha, t);
    let faa = (f(alpha + ha, t) - 2.0 * f0 + f(alpha - ha, t)) / (ha * ha);
    let ftt = (f(alpha, t + ht) - 2.0 * f0 + f(alpha, t - ht)) / (ht * ht);
    let fat = (f(alpha + ha, t + ht) - f(alpha + ha, t - ht) - f(alpha - ha, t + ht)
        + f(alpha - ha, t - ht))
        / (4.0 * ha * ht);
    let det = faa * ftt - fat * fat;
    if !(det > 0.0 && faa > 0.0) {
        return None;
    }
    Some([[ftt / det, -fat / det], [-fat / det, faa / det]])
}

/// Weighted least squares of `ln P` on `(1, ln m, m)` over well-populated
/// bins. Returns `(alpha, T)`.
fn log_density_least_squares(e: &DistributionEstimate) -> Option<(f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (k, &c) in e.counts.iter().enumerate() {
        if c < 5 {
            continue;
        }
        let m = e.binning.center(k);
        if m <= 0.0 {
            continue;
        }
        let row = [1.0, m.ln(), m];
        let y = e.density[k].ln();
        let w = c as f64;
        for i in 0..3 {
            aty[i] += w * row[i] * y;
            for j in 0..3 {
                ata[i][j] += w * row[i] * row[j];
            }
        }
    }
    let beta = solve3(ata, aty)?;
    if beta[2] >= 0.0 {
        return None;
    }
    Some((beta[1], -1.0 / beta[2]))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Fits `C m^alpha exp(-m/T)`. Also reports the saving propensity implied by
/// `alpha = 3 lambda / (1 - lambda)`, i.e. `lambda = alpha / (alpha + 3)`.
pub fn fit_gamma(estimate: &DistributionEstimate) -> Result<FitResult, StatsError> {
    if estimate.total < 10 {
        return Err(StatsError::Empty);
    }
    let (mean, var) = binned_mean_var(estimate);
    let shape0 = (mean * mean / var).max(0.05);
    let scale0 = var / mean;
    let fit = nelder_mead(
        |p: &[f64; 2]| negative_log_likelihood(estimate, p[0].exp(), p[1].exp()),
        [shape0.ln(), scale0.ln()],
        [0.1, 0.1],
        1e-13,
        4_000,
    );
    let mut warnings = Vec::new();
    let (alpha, t, method) = if fit.converged && fit.value.is_finite() {
        (fit.point[0].exp() - 1.0, fit.point[1].exp(), "gamma_binned_mle")
    } else {
        let (alpha, t) = log_density_least_squares(estimate).ok_or_else(|| {
            StatsError::NoConvergence(format!(
                "likelihood simplex stalled at {:?} after {} iterations and the log-density fallback failed",
                fit.point, fit.iterations
            ))
        })?;
        warnings.push("likelihood did not converge; log-density least squares used".into());
        (alpha, t, "gamma_log_density_lsq")
    };
    let cov = covariance(estimate, alpha, t);
    let (se_alpha, se_t) = match cov {
        Some(c) => (c[0][0].sqrt(), c[1][1].sqrt()),
        None => {
            warnings.push("likelihood curvature not positive; standard errors unavailable".into());
            (f64::NAN, f64::NAN)
        }
    };
    let implied = alpha / (alpha + 3.0);
    let se_implied = 3.0 / (alpha + 3.0).powi(2) * se_alpha;
    let ks = ks_statistic(estimate, |x| gamma_p(alpha + 1.0, x / t));
    Ok(FitResult {
        method: method.into(),
        estimates: vec![
            Estimate::new("alpha", alpha, se_alpha),
            Estimate::new("T", t, se_t),
            Estimate::new("implied_lambda", implied, se_implied),
        ],
        window: [estimate.support.0, estimate.support.1],
        goodness: Goodness {
            r_squared: None,
            ks_statistic: Some(ks),
            ks_critical: Some(ks_critical_1pct(estimate.total)),
            samples: estimate.total,
        },
        healthy: alpha.is_finite() && t > 0.0 && alpha > -1.0,
        warnings,
    })
}

/// Fits `P(m) = exp(-m/T) / T`. Healthy when the binned KS statistic is
/// below its 1% critical value.
pub fn fit_exponential(estimate: &DistributionEstimate) -> Result<FitResult, StatsError> {
    if estimate.total < 10 {
        return Err(StatsError::Empty);
    }
    let mean = estimate.binned_raw_moment(1);
    if !(mean > 0.0) {
        return Err(StatsError::Argument("non-positive mean".into()));
    }
    let log_t = minimize_scalar(
        |lt| negative_log_likelihood(estimate, 1.0, lt.exp()),
        (mean / 20.0).ln(),
        (mean * 20.0).ln(),
        1e-12,
    );
    let t = log_t.exp();
    let h = 1e-4 * t;
    let f = |s: f64| negative_log_likelihood(estimate, 1.0, s);
    let curvature = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
    let se = if curvature > 0.0 { curvature.sqrt().recip() } else { f64::NAN };
    let ks = ks_statistic(estimate, |x| 1.0 - (-x / t).exp());
    let critical = ks_critical_1pct(estimate.total);
    let mut warnings = Vec::new();
    if ks >= critical {
        warnings.push(format!("KS statistic {ks:.5} exceeds the 1% critical value {critical:.5}"));
    }
    Ok(FitResult {
        method: "exponential_binned_mle".into(),
        estimates: vec![Estimate::new("T", t, se)],
        window: [estimate.support.0, estimate.support.1],
        goodness: Goodness {
            r_squared: None,
            ks_statistic: Some(ks),
            ks_critical: Some(critical),
            samples: estimate.total,
        },
        healthy: ks < critical,
        warnings,
    })
}
