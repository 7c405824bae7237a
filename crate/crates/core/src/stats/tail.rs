//! Machinery shared by the tail fits. A tail law is a straight line of
//! `ln Q` in some coordinate of the data (`ln m` for a power law, `m` for an
//! exponential); its rate is estimated by binned maximum likelihood and by
//! least squares on the CCDF over the same window of bins.

use super::histogram::{DistributionEstimate, Histogram};
use super::StatsError;
use crate::numeric::bisect;

pub(super) const MIN_WINDOW_COUNT: u64 = 20;
pub(super) const MIN_WINDOW_BINS: usize = 4;

/// Fit window as bin indices `[first, last)` into the edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) struct Window {
    pub first: usize,
    pub last: usize,
}

impl Window {
    /// Checks the window has enough bins and observations to fit.
    pub fn checked(e: &DistributionEstimate, first: usize, last: usize) -> Result<Self, StatsError> {
        if last <= first || last - first < MIN_WINDOW_BINS {
            return Err(StatsError::InsufficientTail(format!(
                "window spans {} bins with data",
                last.saturating_sub(first)
            )));
        }
        let count: u64 = e.counts[first..last].iter().sum();
        if count < MIN_WINDOW_COUNT {
            return Err(StatsError::InsufficientTail(format!("only {count} observations in window")));
        }
        Ok(Self { first, last })
    }

    pub fn count(&self, e: &DistributionEstimate) -> u64 {
        e.counts[self.first..self.last].iter().sum()
    }
}

/// One past the highest bin holding data.
pub(super) fn top_with_data(e: &DistributionEstimate) -> usize {
    (0..e.counts.len()).rev().find(|&k| e.counts[k] > 0).map_or(0, |k| k + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum Coordinate {
    Log,
    Linear,
}

impl Coordinate {
    fn of(self, x: f64) -> f64 {
        match self {
            Self::Log => x.ln(),
            Self::Linear => x,
        }
    }
}

/// Slope of `ln Q` against the coordinate over the window edges, negated.
/// Returns `(rate, r_squared)`.
pub(super) fn least_squares(e: &DistributionEstimate, w: Window, coord: Coordinate) -> Option<(f64, f64)> {
    let q = e.ccdf_at_edges();
    let pts: Vec<(f64, f64)> = (w.first..=w.last)
        .filter(|&k| q[k] > 0.0)
        .map(|k| (coord.of(e.binning.edges[k]), q[k].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((-sxy / sxx, r2))
}

/// Binned maximum likelihood for a density `~ exp(-rate * u)` in the
/// coordinate `u`, truncated to the window. Coordinates are measured from the
/// window start so a shift of `u` (a rescaling of the data, for the log
/// coordinate) leaves the likelihood unchanged.
pub(super) fn max_likelihood(e: &DistributionEstimate, w: Window, coord: Coordinate, bounds: (f64, f64)) -> f64 {
    let edges = &e.binning.edges;
    let u: Vec<f64> = (w.first..=w.last)
        .map(|k| match coord {
            Coordinate::Log => (edges[k] / edges[w.first]).ln(),
            Coordinate::Linear => edges[k] - edges[w.first],
        })
        .collect();
    let counts = &e.counts[w.first..w.last];
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let span = u[u.len() - 1];
    // Score of the likelihood. It decreases in the rate, so bisecting it to
    // the last bit gives the maximiser exactly, where a direct search on the
    // flat likelihood stalls near sqrt(eps).
    let score = |rate: f64| {
        let mut s = -total * span / (rate * span).exp_m1();
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                let width = u[k + 1] - u[k];
                s += c as f64 * (width / (rate * width).exp_m1() - u[k]);
            }
        }
        s
    };
    let (lo, hi) = bounds;
    if score(lo) <= 0.0 {
        return lo;
    }
    if score(hi) >= 0.0 {
        return hi;
    }
    bisect(score, lo, hi, 0.0).unwrap_or(f64::NAN)
}

/// `(likelihood, least squares, r_squared)` estimates of some quantity.
pub(super) type Estimator<'a> = dyn Fn(&DistributionEstimate) -> Option<(f64, f64, f64)> + 'a;

fn jackknife_se(values: &[(f64, f64)]) -> f64 {
    // (estimate, weight) pairs; weights are observation counts per replicate.
    let total: f64 = values.iter().map(|v| v.1).sum();
    if total <= 1.0 {
        return f64::NAN;
    }
    let mean = values.iter().map(|v| v.0 * v.1).sum::<f64>() / total;
    let ss: f64 = values.iter().map(|v| v.1 * (v.0 - mean).powi(2)).sum();
    ((total - 1.0) / total * ss).sqrt()
}

/// Delete-one-observation jackknife errors of both estimates. Observations
/// in the same bin give the same replicate, as do all observations below the
/// window (they only rescale Q).
pub(super) fn observation_jackknife(
    estimate: &DistributionEstimate,
    w: Window,
    full: (f64, f64, f64),
    f: &Estimator,
) -> (f64, f64) {
    let h = estimate.to_histogram();
    let mut reps_ml = Vec::new();
    let mut reps_ls = Vec::new();
    let replicate = |h: &Histogram| h.estimate().ok().and_then(|e| f(&e));
    let mut add = |r: Option<(f64, f64, f64)>, weight: u64| {
        if let Some((ml, ls, _)) = r {
            reps_ml.push((ml, weight as f64));
            reps_ls.push((ls, weight as f64));
        }
    };
    for k in w.first..h.counts.len() {
        let c = h.counts[k];
        if c == 0 {
            continue;
        }
        let mut d = h.clone();
        d.counts[k] -= 1;
        add(replicate(&d), c);
    }
    let below: u64 = h.underflow + h.counts[..w.first].iter().sum::<u64>();
    if below > 0 {
        add(Some(full), below);
    }
    if h.overflow > 0 {
        let mut d = h.clone();
        d.overflow -= 1;
        add(replicate(&d), h.overflow);
    }
    (jackknife_se(&reps_ml), jackknife_se(&reps_ls))
}

fn group_jackknife_se(reps: &[f64]) -> f64 {
    let g = reps.len() as f64;
    if g < 2.0 {
        return f64::NAN;
    }
    let mean = reps.iter().sum::<f64>() / g;
    ((g - 1.0) / g * reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Delete-one-group jackknife errors of both estimates.
pub(super) fn group_jackknife(
    merged: &Histogram,
    groups: &[Histogram],
    f: &Estimator,
) -> Result<(f64, f64), StatsError> {
    let mut reps_ml = Vec::with_capacity(groups.len());
    let mut reps_ls = Vec::with_capacity(groups.len());
    for g in groups {
        let e = merged.without(g).estimate()?;
        if let Some((ml, ls, _)) = f(&e) {
            reps_ml.push(ml);
            reps_ls.push(ls);
        }
    }
    Ok((group_jackknife_se(&reps_ml), group_jackknife_se(&reps_ls)))
}

pub(crate) fn merge_all(groups: &[Histogram]) -> Result<Histogram, StatsError> {
    let (first, rest) = groups.split_first().ok_or(StatsError::Empty)?;
    let mut merged = first.clone();
    for g in rest {
        merged.merge(g)?;
    }
    Ok(merged)
}

pub(super) fn too_short() -> StatsError {
    StatsError::InsufficientTail("fewer than three CCDF points in window".into())
}
