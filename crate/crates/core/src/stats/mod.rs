//! Measured quantities: binned densities and CCDFs, tail and bulk fits,
//! moments, statistics conditional on the saving propensity, and the
//! distribution of pairwise money differences.

mod conditional;
mod difference;
mod exp_tail;
mod gamma_fit;
mod histogram;
mod moments;
mod pareto;
mod tail;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conditional::{conditional_money_by_lambda, ConditionalAccumulator, LambdaBinStats};
pub use difference::{
    pairwise_difference_distribution, pairwise_difference_histograms, PairSampling,
};
pub use exp_tail::{
    fit_exponential_tail, fit_exponential_tail_grouped, ExpWindowPolicy, MIN_EFOLDS,
};
pub use gamma_fit::{fit_exponential, fit_gamma, ks_critical_1pct};
pub use histogram::{
    ccdf, ccdf_from_estimate, Binning, BinningKind, Ccdf, DistributionEstimate, Histogram, Slot,
};
pub use moments::{moments, moments_blocked, Moment};
pub use pareto::{
    fit_pareto_tail, fit_pareto_tail_grouped, sensitivity, WindowPolicy, AGREEMENT_SIGMAS,
    MIN_R_SQUARED, SENSITIVITY_FRACTIONS,
};

/// Default logarithmic resolution.
pub const BINS_PER_DECADE: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no data")]
    Empty,
    #[error("invalid sample value {0}")]
    InvalidSample(f64),
    #[error("invalid binning: {0}")]
    Binning(String),
    #[error("invalid fit window: {0}")]
    Window(String),
    #[error("insufficient tail data: {0}")]
    InsufficientTail(String),
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(name: &str, value: f64, stderr: f64) -> Self {
        Self { name: name.into(), value, stderr }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Goodness {
    /// Coefficient of determination of a log-log line.
    pub r_squared: Option<f64>,
    /// Largest CDF gap between data and fit, over the bin edges.
    pub ks_statistic: Option<f64>,
    /// Asymptotic 1% critical value for `samples` observations.
    pub ks_critical: Option<f64>,
    /// Observations the fit used.
    pub samples: u64,
}

/// Outcome of any of the fits. Serialises to the JSON written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: String,
    pub estimates: Vec<Estimate>,
    /// Data range the fit was run on.
    pub window: [f64; 2],
    pub goodness: Goodness,
    pub healthy: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|e| e.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.get(name).map(|e| e.stderr)
    }
}
