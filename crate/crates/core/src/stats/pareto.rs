//! Power-law tail fits.
//!
//! Two estimators are run over the same window of a binned distribution:
//!
//! * least squares on `ln Q(m)` against `ln m` at the bin edges, where `Q` is
//!   the complementary CDF;
//! * maximum likelihood for the binned counts under a Pareto density
//!   truncated to the window, the binned analogue of the Hill estimator.
//!
//! Standard errors come from a jackknife: delete-one-observation over the
//! bins for a single histogram, delete-one-group when a set of independent
//! histograms (for instance one per ensemble realization) is supplied. The
//! group form is the honest one for Monte Carlo output, whose samples are
//! correlated in time.

use serde::{Deserialize, Serialize};

use super::histogram::{DistributionEstimate, Histogram};
use super::tail::{self, merge_all, too_short, Coordinate, Window};
use super::{Estimate, FitResult, Goodness, StatsError};

/// Which part of the distribution counts as the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Start at the edge above which `fraction` of the observations lie and
    /// extend `decades` factors of ten (clipped to the data).
    TopFraction { fraction: f64, decades: f64 },
    /// Explicit `[lo, hi)`, snapped outward to bin edges.
    Explicit { lo: f64, hi: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self::TopFraction { fraction: 0.1, decades: 1.0 }
    }
}

/// Tail fractions reported by [`sensitivity`].
pub const SENSITIVITY_FRACTIONS: [f64; 3] = [0.05, 0.10, 0.20];

/// The estimators must agree within this many combined standard errors.
pub const AGREEMENT_SIGMAS: f64 = 2.0;
/// Minimum coefficient of determination of the CCDF line.
pub const MIN_R_SQUARED: f64 = 0.99;

fn resolve_window(e: &DistributionEstimate, policy: WindowPolicy) -> Result<Window, StatsError> {
    let edges = &e.binning.edges;
    let q = e.ccdf_at_edges();
    let n = e.counts.len();
    let (first, wanted_hi) = match policy {
        WindowPolicy::TopFraction { fraction, decades } => {
            if !(fraction > 0.0 && fraction < 1.0 && decades > 0.0) {
                return Err(StatsError::Window(format!(
                    "fraction {fraction} and decades {decades} must be in (0, 1) and positive"
                )));
            }
            let first = (0..=n).find(|&k| q[k] <= fraction).unwrap_or(n);
            (first, edges[first.min(n)] * 10f64.powf(decades))
        }
        WindowPolicy::Explicit { lo, hi } => {
            if !(hi > lo && lo > 0.0) {
                return Err(StatsError::Window(format!("explicit window [{lo}, {hi})")));
            }
            let first = (0..n).rev().find(|&k| edges[k] <= lo).unwrap_or(0);
            (first, hi)
        }
    };
    let last_wanted = (0..=n).find(|&k| edges[k] >= wanted_hi * (1.0 - 1e-12)).unwrap_or(n);
    Window::checked(e, first, last_wanted.min(tail::top_with_data(e)))
}

fn both(e: &DistributionEstimate, w: Window) -> Option<(f64, f64, f64)> {
    let (nu_ls, r2) = tail::least_squares(e, w, Coordinate::Log)?;
    Some((tail::max_likelihood(e, w, Coordinate::Log, (1e-4, 20.0)), nu_ls, r2))
}

/// Fits the Pareto exponent `nu` of `P(m) ~ m^-(1+nu)` to the tail of a
/// single binned distribution.
pub fn fit_pareto_tail(
    estimate: &DistributionEstimate,
    policy: WindowPolicy,
) -> Result<FitResult, StatsError> {
    let w = resolve_window(estimate, policy)?;
    let full = both(estimate, w).ok_or_else(too_short)?;
    let (se_ml, se_ls) = tail::observation_jackknife(estimate, w, full, &|e| both(e, w));
    Ok(assemble(estimate, w, full, se_ml, se_ls))
}

/// Same fit on the merge of independent groups, with delete-one-group
/// jackknife errors.
pub fn fit_pareto_tail_grouped(
    groups: &[Histogram],
    policy: WindowPolicy,
) -> Result<FitResult, StatsError> {
    let merged = merge_all(groups)?;
    let estimate = merged.estimate()?;
    if groups.len() < 2 {
        return fit_pareto_tail(&estimate, policy);
    }
    let w = resolve_window(&estimate, policy)?;
    let full = both(&estimate, w).ok_or_else(too_short)?;
    let (se_ml, se_ls) = tail::group_jackknife(&merged, groups, &|e| both(e, w))?;
    let mut fit = assemble(&estimate, w, full, se_ml, se_ls);
    fit.method = "pareto_tail_grouped".into();
    Ok(fit)
}

fn assemble(
    e: &DistributionEstimate,
    w: Window,
    (nu_ml, nu_ls, r2): (f64, f64, f64),
    se_ml: f64,
    se_ls: f64,
) -> FitResult {
    let lo = e.binning.edges[w.first];
    let hi = e.binning.edges[w.last];
    let combined = (se_ml * se_ml + se_ls * se_ls).sqrt();
    let mut warnings = Vec::new();
    let span_ok = hi / lo >= 10.0 * (1.0 - 1e-9);
    if !span_ok {
        warnings.push(format!("tail window spans only {:.2} decades", (hi / lo).log10()));
    }
    let agree = (nu_ml - nu_ls).abs() <= AGREEMENT_SIGMAS * combined;
    if !agree {
        warnings.push(format!(
            "estimators disagree: likelihood {nu_ml:.4} vs least squares {nu_ls:.4} (combined stderr {combined:.4})"
        ));
    }
    if r2 < MIN_R_SQUARED {
        warnings.push(format!("log-log CCDF is curved: R^2 = {r2:.4}"));
    }
    FitResult {
        method: "pareto_tail".into(),
        estimates: vec![
            Estimate::new("nu", nu_ml, se_ml),
            Estimate::new("nu_least_squares", nu_ls, se_ls),
        ],
        window: [lo, hi],
        goodness: Goodness { r_squared: Some(r2), samples: w.count(e), ..Goodness::default() },
        healthy: span_ok && agree && r2 >= MIN_R_SQUARED,
        warnings,
    }
}

/// Tail fits for each fraction in [`SENSITIVITY_FRACTIONS`], one decade each.
pub fn sensitivity(estimate: &DistributionEstimate) -> Vec<(f64, Result<FitResult, StatsError>)> {
    SENSITIVITY_FRACTIONS
        .iter()
        .map(|&fraction| {
            (fraction, fit_pareto_tail(estimate, WindowPolicy::TopFraction { fraction, decades: 1.0 }))
        })
        .collect()
}
