use serde::{Deserialize, Serialize};

/// Money of the highest-propensity agent after every Monte Carlo step,
/// averaged over ensembles. Index 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichestTrace {
    /// Propensity of the tracked agent in each ensemble.
    pub lambda_max: Vec<f64>,
    pub series: Vec<f64>,
    /// Mean of the second half of the series.
    pub long_run_mean: f64,
    /// First step at which the series is within [`RELAXATION_TOLERANCE`] of
    /// the long-run mean.
    pub tau: Option<u64>,
}

pub const RELAXATION_TOLERANCE: f64 = 0.1;

impl RichestTrace {
    pub fn from_series(lambda_max: Vec<f64>, series: Vec<f64>) -> Self {
        let (long_run_mean, tau) = relaxation_time(&series, RELAXATION_TOLERANCE);
        Self { lambda_max, series, long_run_mean, tau }
    }
}

/// Long-run mean (mean of the second half) and the first index at which the
/// series comes within `tolerance` of it, relative.
pub fn relaxation_time(series: &[f64], tolerance: f64) -> (f64, Option<u64>) {
    if series.is_empty() {
        return (f64::NAN, None);
    }
    let tail = &series[series.len() / 2..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let tau = series.iter().position(|&x| (x - mean).abs() <= tolerance * mean.abs());
    (mean, tau.map(|t| t as u64))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxation_of_exponential_approach() {
        let t0 = 50.0;
        let series: Vec<f64> = (0..2000).map(|t| 10.0 * (1.0 - (-(t as f64) / t0).exp())).collect();
        let (mean, tau) = relaxation_time(&series, 0.1);
        assert!((mean - 10.0).abs() < 1e-6);
        // 1 - exp(-t/t0) >= 0.9 first at t = ceil(t0 ln 10).
        assert_eq!(tau, Some((t0 * 10f64.ln()).ceil() as u64));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.3)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 1.3).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
    }
}
