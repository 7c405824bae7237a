//! Exponential tail fits, `Q(x) ~ exp(-x/T)` beyond some point, for
//! distributions whose bulk has a different shape (the commodity holdings,
//! for one). Same two estimators and health rules as the power-law fit, with
//! `x` in place of `ln x`.

use serde::{Deserialize, Serialize};

use super::histogram::{DistributionEstimate, Histogram};
use super::pareto::{AGREEMENT_SIGMAS, MIN_R_SQUARED};
use super::tail::{self, merge_all, too_short, Coordinate, Window};
use super::{Estimate, FitResult, Goodness, StatsError};

/// The window must cover at least this many e-folds of the CCDF.
pub const MIN_EFOLDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ExpWindowPolicy {
    /// From the first edge where the CCDF is at most `from` to the first
    /// where it is at most `to` (clipped to the data).
    Ccdf { from: f64, to: f64 },
    /// Explicit `[lo, hi)`, snapped outward to bin edges.
    Explicit { lo: f64, hi: f64 },
}

impl Default for ExpWindowPolicy {
    fn default() -> Self {
        Self::Ccdf { from: 0.3, to: 1e-3 }
    }
}

fn resolve_window(e: &DistributionEstimate, policy: ExpWindowPolicy) -> Result<Window, StatsError> {
    let edges = &e.binning.edges;
    let q = e.ccdf_at_edges();
    let n = e.counts.len();
    let (first, last) = match policy {
        ExpWindowPolicy::Ccdf { from, to } => {
            if !(0.0 < to && to < from && from < 1.0) {
                return Err(StatsError::Window(format!("CCDF levels {from} and {to}")));
            }
            let first = (0..=n).find(|&k| q[k] <= from).unwrap_or(n);
            (first, (0..=n).find(|&k| q[k] <= to).unwrap_or(n))
        }
        ExpWindowPolicy::Explicit { lo, hi } => {
            if !(hi > lo) {
                return Err(StatsError::Window(format!("explicit window [{lo}, {hi})")));
            }
            let first = (0..n).rev().find(|&k| edges[k] <= lo).unwrap_or(0);
            (first, (0..=n).find(|&k| edges[k] >= hi * (1.0 - 1e-12)).unwrap_or(n))
        }
    };
    Window::checked(e, first, last.min(tail::top_with_data(e)))
}

/// Temperatures `(likelihood, least squares, r_squared)`.
fn both(e: &DistributionEstimate, w: Window) -> Option<(f64, f64, f64)> {
    let (rate_ls, r2) = tail::least_squares(e, w, Coordinate::Linear)?;
    let width = e.binning.edges[w.last] - e.binning.edges[w.first];
    let rate_ml = tail::max_likelihood(e, w, Coordinate::Linear, (1e-3 / width, 1e3 / width));
    Some((rate_ml.recip(), rate_ls.recip(), r2))
}

/// Fits the decay scale `T` of an exponential tail of one binned
/// distribution.
pub fn fit_exponential_tail(
    estimate: &DistributionEstimate,
    policy: ExpWindowPolicy,
) -> Result<FitResult, StatsError> {
    let w = resolve_window(estimate, policy)?;
    let full = both(estimate, w).ok_or_else(too_short)?;
    let (se_ml, se_ls) = tail::observation_jackknife(estimate, w, full, &|e| both(e, w));
    Ok(assemble(estimate, w, full, se_ml, se_ls))
}

/// Same fit on the merge of independent groups, with delete-one-group
/// jackknife errors.
pub fn fit_exponential_tail_grouped(
    groups: &[Histogram],
    policy: ExpWindowPolicy,
) -> Result<FitResult, StatsError> {
    let merged = merge_all(groups)?;
    let estimate = merged.estimate()?;
    if groups.len() < 2 {
        return fit_exponential_tail(&estimate, policy);
    }
    let w = resolve_window(&estimate, policy)?;
    let full = both(&estimate, w).ok_or_else(too_short)?;
    let (se_ml, se_ls) = tail::group_jackknife(&merged, groups, &|e| both(e, w))?;
    let mut fit = assemble(&estimate, w, full, se_ml, se_ls);
    fit.method = "exponential_tail_grouped".into();
    Ok(fit)
}

fn assemble(
    e: &DistributionEstimate,
    w: Window,
    (t_ml, t_ls, r2): (f64, f64, f64),
    se_ml: f64,
    se_ls: f64,
) -> FitResult {
    let q = e.ccdf_at_edges();
    let efolds = (q[w.first] / q[w.last]).ln();
    let combined = (se_ml * se_ml + se_ls * se_ls).sqrt();
    let mut warnings = Vec::new();
    let span_ok = efolds >= MIN_EFOLDS;
    if !span_ok {
        warnings.push(format!("tail window covers only {efolds:.2} e-folds"));
    }
    let agree = (t_ml - t_ls).abs() <= AGREEMENT_SIGMAS * combined;
    if !agree {
        warnings.push(format!(
            "estimators disagree: likelihood {t_ml:.4} vs least squares {t_ls:.4} (combined stderr {combined:.4})"
        ));
    }
    if r2 < MIN_R_SQUARED {
        warnings.push(format!("log-linear CCDF is curved: R^2 = {r2:.4}"));
    }
    FitResult {
        method: "exponential_tail".into(),
        estimates: vec![Estimate::new("T", t_ml, se_ml), Estimate::new("T_least_squares", t_ls, se_ls)],
        window: [e.binning.edges[w.first], e.binning.edges[w.last]],
        goodness: Goodness { r_squared: Some(r2), samples: w.count(e), ..Goodness::default() },
        healthy: span_ok && agree && r2 >= MIN_R_SQUARED && t_ml > 0.0 && t_ls > 0.0,
        warnings,
    }
}
