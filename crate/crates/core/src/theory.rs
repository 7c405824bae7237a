//! Analytic reference values for the simulated distributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lambda::{LambdaDistSpec, LambdaError};
use crate::numeric::{self, ln_gamma, NumericError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no root of 2<lambda^nu> = 1 for nu in (0, {0}]")]
    NoRoot(f64),
    #[error("tail of the propensity distribution near 1 is not classifiable: {0}")]
    Unclassifiable(String),
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Largest exponent searched by [`solve_selfconsistent_nu`].
pub const NU_SEARCH_MAX: f64 = 64.0;

/// Temperature of the exponential law of the no-savings market.
pub fn gibbs_temperature(total_money: f64, agents: usize) -> Result<f64, TheoryError> {
    if !(total_money > 0.0 && total_money.is_finite()) || agents == 0 {
        return Err(TheoryError::Argument(format!(
            "need M > 0 and N >= 1, got M = {total_money}, N = {agents}"
        )));
    }
    Ok(total_money / agents as f64)
}

/// Parameters of the gamma law `P(m) = C m^alpha exp(-m / T)` for a market
/// where everyone saves the same fraction, at unit mean money.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub temperature: f64,
    pub norm: f64,
}

impl GammaParams {
    /// Density at `m` for unit mean money.
    pub fn density(&self, m: f64) -> f64 {
        self.density_with_mean(m, 1.0)
    }

    /// Density at `m` when the mean money per agent is `mean`.
    pub fn density_with_mean(&self, m: f64, mean: f64) -> f64 {
        if m < 0.0 {
            return 0.0;
        }
        let x = m / mean;
        let k = self.alpha + 1.0;
        if x == 0.0 {
            return if self.alpha == 0.0 { k / mean } else { 0.0 };
        }
        (k * k.ln() - ln_gamma(k) + self.alpha * x.ln() - k * x).exp() / mean
    }

    /// Raw moment `<m^order>` at unit mean.
    pub fn raw_moment(&self, order: u32) -> f64 {
        let k = self.alpha + 1.0;
        (0..order).map(|j| (k + j as f64) / k).product()
    }
}

pub fn gamma_params(lambda: f64) -> Result<GammaParams, TheoryError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(TheoryError::Argument(format!("lambda = {lambda} outside [0, 1)")));
    }
    let alpha = 3.0 * lambda / (1.0 - lambda);
    let k = alpha + 1.0;
    Ok(GammaParams { alpha, temperature: 1.0 / k, norm: (k * k.ln() - ln_gamma(k)).exp() })
}

/// Root `nu > 0` of `2 <lambda^nu> = 1`, by bisection to 1e-10 with the
/// expectation evaluated by adaptive quadrature to 1e-12.
pub fn solve_selfconsistent_nu(spec: &LambdaDistSpec) -> Result<f64, TheoryError> {
    spec.validate()?;
    let g = |nu: f64| -> f64 {
        match spec.expectation(|l| if l == 0.0 { 0.0 } else { l.powf(nu) }, 1e-12) {
            Ok(v) => 2.0 * v - 1.0,
            Err(_) => f64::NAN,
        }
    };
    // g decreases from 2 P(lambda > 0) - 1 at nu -> 0 towards -1.
    let lo = 1e-12;
    let g_lo = g(lo);
    let g_hi = g(NU_SEARCH_MAX);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(TheoryError::NoRoot(NU_SEARCH_MAX));
    }
    match numeric::bisect(g, lo, NU_SEARCH_MAX, 1e-10) {
        Ok(nu) => Ok(nu),
        Err(NumericError::NoBracket { .. }) => Err(TheoryError::NoRoot(NU_SEARCH_MAX)),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "nu", rename_all = "snake_case")]
pub enum TailPrediction {
    PowerLaw(f64),
    NoPowerLaw,
}

impl TailPrediction {
    pub fn nu(&self) -> Option<f64> {
        match self {
            Self::PowerLaw(nu) => Some(*nu),
            Self::NoPowerLaw => None,
        }
    }
}

/// Pareto exponent implied by how the propensity density behaves near one:
/// `1 + delta` for a density like `(1 - lambda)^delta`, and no power law when
/// the support stops short of one. Annealed markets inherit the exponent of
/// their lower-bound distribution.
pub fn predicted_tail_exponent(spec: &LambdaDistSpec) -> Result<TailPrediction, TheoryError> {
    spec.validate()?;
    Ok(match spec {
        LambdaDistSpec::Fixed { .. } => TailPrediction::NoPowerLaw,
        LambdaDistSpec::UniformInterval { hi, lo } => {
            if *hi >= 1.0 && hi > lo {
                TailPrediction::PowerLaw(1.0)
            } else {
                TailPrediction::NoPowerLaw
            }
        }
        LambdaDistSpec::PowerAboutOne { delta } => TailPrediction::PowerLaw(1.0 + delta),
        // Near one the density tends to the constant |lambda0 - 1|^delta.
        LambdaDistSpec::PowerAboutLambda0 { .. } => TailPrediction::PowerLaw(1.0),
        LambdaDistSpec::Mixed { fraction, rest, .. } => {
            if *fraction >= 1.0 {
                TailPrediction::NoPowerLaw
            } else {
                predicted_tail_exponent(rest)?
            }
        }
        LambdaDistSpec::AnnealedLowerBound { zeta } => {
            if zeta.is_annealed() {
                return Err(TheoryError::Unclassifiable("nested annealed spec".into()));
            }
            predicted_tail_exponent(zeta)?
        }
    })
}

/// A density tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedCurve {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Large-money density `rho(1 - c/m) / m^2` for a quenched market, normalised
/// on `grid`. Every grid point must exceed `c`.
pub fn predicted_density_curve(
    spec: &LambdaDistSpec,
    c: f64,
    grid: &[f64],
) -> Result<TabulatedCurve, TheoryError> {
    spec.validate()?;
    if spec.is_annealed() {
        return Err(TheoryError::Argument(
            "the m = c / (1 - lambda) map holds for quenched propensities only".into(),
        ));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(TheoryError::Argument(format!("c = {c} must be positive")));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TheoryError::Argument("grid must be strictly increasing".into()));
    }
    if grid[0] <= c {
        return Err(TheoryError::Argument(format!("grid point {} is not above c = {c}", grid[0])));
    }
    let raw: Vec<f64> = grid
        .iter()
        .map(|&m| Ok(spec.density(1.0 - c / m)? / (m * m)))
        .collect::<Result<_, LambdaError>>()?;
    let total = trapezoid(grid, &raw);
    if !(total > 0.0 && total.is_finite()) {
        return Err(TheoryError::Argument(
            "propensity density vanishes on the mapped grid".into(),
        ));
    }
    Ok(TabulatedCurve { grid: grid.to_vec(), values: raw.into_iter().map(|v| v / total).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    GibbsT,
    GammaParams,
    ParetoNu,
    MeanMoneyCurve,
    PredictedDensity,
}

/// One exported prediction. `provenance` names the relation it comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub quantity: Quantity,
    pub values: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<TabulatedCurve>,
    pub provenance: String,
}

impl TheoryPrediction {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn gibbs(total_money: f64, agents: usize) -> Result<Self, TheoryError> {
        Ok(Self {
            quantity: Quantity::GibbsT,
            values: vec![("T".into(), gibbs_temperature(total_money, agents)?)],
            curve: None,
            provenance: "gibbs_exponential_law".into(),
        })
    }

    pub fn gamma(lambda: f64) -> Result<Self, TheoryError> {
        let p = gamma_params(lambda)?;
        Ok(Self {
            quantity: Quantity::GammaParams,
            values: vec![
                ("alpha".into(), p.alpha),
                ("T".into(), p.temperature),
                ("C".into(), p.norm),
            ],
            curve: None,
            provenance: "gamma_law_uniform_savings".into(),
        })
    }

    /// Tail exponent of a quenched or annealed spec, with the self-consistent
    /// root alongside when it exists.
    pub fn pareto(spec: &LambdaDistSpec) -> Result<Self, TheoryError> {
        let mut values = Vec::new();
        if let Some(nu) = predicted_tail_exponent(spec)?.nu() {
            values.push(("nu".into(), nu));
        }
        if !spec.is_annealed() {
            if let Ok(nu) = solve_selfconsistent_nu(spec) {
                values.push(("nu_self_consistent".into(), nu));
            }
        }
        Ok(Self {
            quantity: Quantity::ParetoNu,
            values,
            curve: None,
            provenance: "tail_from_propensity_density".into(),
        })
    }

    /// Mean money of an agent with propensity `lambda` is `c / (1 - lambda)`.
    pub fn mean_money_curve(c: f64, lambdas: &[f64]) -> Result<Self, TheoryError> {
        if lambdas.iter().any(|l| !(0.0..1.0).contains(l)) {
            return Err(TheoryError::Argument("lambda grid must lie in [0, 1)".into()));
        }
        Ok(Self {
            quantity: Quantity::MeanMoneyCurve,
            values: vec![("c".into(), c)],
            curve: Some(TabulatedCurve {
                grid: lambdas.to_vec(),
                values: lambdas.iter().map(|l| c / (1.0 - l)).collect(),
            }),
            provenance: "mean_field_money_vs_propensity".into(),
        })
    }

    pub fn density(spec: &LambdaDistSpec, c: f64, grid: &[f64]) -> Result<Self, TheoryError> {
        Ok(Self {
            quantity: Quantity::PredictedDensity,
            values: vec![("c".into(), c)],
            curve: Some(predicted_density_curve(spec, c, grid)?),
            provenance: "density_from_propensity_map".into(),
        })
    }
}
