use serde::{Deserialize, Serialize};

use crate::lambda::LambdaDistSpec;
use crate::stats::{Binning, BINS_PER_DECADE};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    NoSavings,
    UniformSavings,
    DistributedSavings,
    Angle,
    MinimumExchange,
    Commodity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    #[default]
    Random,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Everyone starts with the mean.
    #[default]
    Uniform,
    /// Money (and commodity) split in proportion to independent uniform draws.
    Random,
}

/// Settings of the automatic burn-in detector. Distances are L1 distances
/// between the money histograms of successive windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoBurnIn {
    /// Window length in Monte Carlo steps.
    pub window: u64,
    pub threshold: f64,
    /// Number of consecutive windows that must stay below the threshold.
    pub consecutive: u32,
    /// Give up after this many steps.
    pub max_steps: u64,
}

impl Default for AutoBurnIn {
    fn default() -> Self {
        Self { window: 1000, threshold: 0.05, consecutive: 3, max_steps: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnIn {
    Steps(u64),
    Auto(AutoBurnIn),
}

/// Histogram grid, in units of the mean holding per agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BinningSpec {
    Logarithmic { lo: f64, hi: f64, bins_per_decade: usize },
    Linear { lo: f64, hi: f64, bins: usize },
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self::Logarithmic { lo: 1e-6, hi: 1e6, bins_per_decade: BINS_PER_DECADE }
    }
}

impl BinningSpec {
    pub fn build(&self, scale: f64) -> Result<Binning, EngineError> {
        let b = match *self {
            Self::Logarithmic { lo, hi, bins_per_decade } => {
                Binning::logarithmic(lo * scale, hi * scale, bins_per_decade)
            }
            Self::Linear { lo, hi, bins } => Binning::linear(lo * scale, hi * scale, bins),
        };
        b.map_err(|e| EngineError::Config(e.to_string()))
    }
}

/// Following the agent with the largest saving propensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RichestTracking {
    /// Give agent 0 exactly this propensity and draw everyone else below it.
    /// Without it the tracked agent is whoever drew the largest value.
    #[serde(default)]
    pub pinned_lambda_max: Option<f64>,
}

/// A full simulation setup. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    #[serde(alias = "N")]
    pub agents: usize,
    #[serde(default = "one")]
    pub money_per_agent: f64,
    #[serde(default = "one")]
    pub commodity_per_agent: f64,
    /// Saving propensities. Required by the savings models; in the commodity
    /// market its absence means no savings, a `fixed` spec means everyone
    /// saves that fraction, and anything else gives each agent its own.
    #[serde(default)]
    pub lambda_spec: Option<LambdaDistSpec>,
    #[serde(default)]
    pub theta: f64,
    /// Price noise during burn-in only; defaults to `theta`. The stationary
    /// state does not depend on the noise, only the time to reach it does.
    #[serde(default)]
    pub burn_in_theta: Option<f64>,
    /// Fraction of the loser's money moved in the angle model.
    #[serde(default)]
    pub angle_fraction: Option<f64>,
    #[serde(default)]
    pub epsilon_mode: EpsilonMode,
    /// Defaults to 10^4 steps, or 10^6 when propensities are distributed.
    #[serde(default)]
    pub burn_in: Option<BurnIn>,
    /// Monte Carlo steps of sampling after burn-in.
    pub mc_steps: u64,
    #[serde(default = "ten")]
    pub sample_interval: u64,
    #[serde(default = "one_usize")]
    pub ensembles: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub binning: BinningSpec,
    /// Propensity bin edges for the conditional money statistics.
    #[serde(default)]
    pub lambda_bins: Option<Vec<f64>>,
    /// Random pairs per sample tick fed to the money-difference histogram.
    #[serde(default)]
    pub difference_pairs: usize,
    /// Keep every ensemble's final money vector.
    #[serde(default)]
    pub keep_final_snapshots: bool,
    /// Record each agent's propensity and time-averaged money.
    #[serde(default)]
    pub record_agents: bool,
    #[serde(default)]
    pub track_richest: Option<RichestTracking>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn ten() -> u64 {
    10
}

impl SimConfig {
    /// A config with every optional field at its default.
    pub fn new(model: Model, agents: usize, mc_steps: u64, seed: u64) -> Self {
        Self {
            model,
            agents,
            money_per_agent: 1.0,
            commodity_per_agent: 1.0,
            lambda_spec: None,
            theta: 0.0,
            burn_in_theta: None,
            angle_fraction: None,
            epsilon_mode: EpsilonMode::Random,
            burn_in: None,
            mc_steps,
            sample_interval: 10,
            ensembles: 1,
            seed,
            initial: InitialCondition::Uniform,
            binning: BinningSpec::default(),
            lambda_bins: None,
            difference_pairs: 0,
            keep_final_snapshots: false,
            record_agents: false,
            track_richest: None,
        }
    }

    pub fn with_lambda(mut self, spec: LambdaDistSpec) -> Self {
        self.lambda_spec = Some(spec);
        self
    }

    pub fn with_burn_in(mut self, steps: u64) -> Self {
        self.burn_in = Some(BurnIn::Steps(steps));
        self
    }

    pub fn with_ensembles(mut self, ensembles: usize) -> Self {
        self.ensembles = ensembles;
        self
    }

    pub fn total_money(&self) -> f64 {
        self.money_per_agent * self.agents as f64
    }

    /// Whether each agent has its own propensity (quenched or annealed).
    pub fn distributed(&self) -> bool {
        match self.model {
            Model::DistributedSavings => true,
            Model::Commodity => {
                matches!(&self.lambda_spec, Some(s) if !matches!(s, LambdaDistSpec::Fixed { .. }))
            }
            _ => false,
        }
    }

    pub fn annealed(&self) -> bool {
        self.distributed() && self.lambda_spec.as_ref().is_some_and(|s| s.is_annealed())
    }

    pub fn effective_burn_in(&self) -> BurnIn {
        self.burn_in.unwrap_or(if self.distributed() {
            BurnIn::Steps(1_000_000)
        } else {
            BurnIn::Steps(10_000)
        })
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.agents < 2 {
            return bad(format!("need at least 2 agents, got {}", self.agents));
        }
        if !(self.money_per_agent > 0.0 && self.money_per_agent.is_finite()) {
            return bad(format!("money_per_agent = {} must be positive", self.money_per_agent));
        }
        if self.model == Model::Commodity
            && !(self.commodity_per_agent > 0.0 && self.commodity_per_agent.is_finite())
        {
            return bad(format!(
                "commodity_per_agent = {} must be positive",
                self.commodity_per_agent
            ));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return bad(format!("theta = {} outside [0, 1)", self.theta));
        }
        if self.theta != 0.0 && self.model != Model::Commodity {
            return bad("theta only applies to the commodity market".into());
        }
        if let Some(t) = self.burn_in_theta {
            if !(0.0..1.0).contains(&t) {
                return bad(format!("burn_in_theta = {t} outside [0, 1)"));
            }
            if self.model != Model::Commodity {
                return bad("burn_in_theta only applies to the commodity market".into());
            }
        }
        if let EpsilonMode::Fixed(e) = self.epsilon_mode {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("fixed epsilon {e} outside [0, 1]"));
            }
        }
        if self.sample_interval == 0 {
            return bad("sample_interval must be positive".into());
        }
        if self.ensembles == 0 {
            return bad("ensembles must be positive".into());
        }
        if let Some(spec) = &self.lambda_spec {
            spec.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        }
        match self.model {
            Model::NoSavings | Model::MinimumExchange => {
                if self.lambda_spec.is_some() {
                    return bad(format!("{:?} takes no lambda_spec", self.model));
                }
            }
            Model::UniformSavings => match &self.lambda_spec {
                Some(LambdaDistSpec::Fixed { .. }) => {}
                _ => return bad("uniform_savings needs lambda_spec of kind fixed".into()),
            },
            Model::DistributedSavings => {
                if self.lambda_spec.is_none() {
                    return bad("distributed_savings needs a lambda_spec".into());
                }
            }
            Model::Angle => match self.angle_fraction {
                Some(w) if w > 0.0 && w < 1.0 => {}
                _ => return bad("angle model needs angle_fraction in (0, 1)".into()),
            },
            Model::Commodity => {}
        }
        if self.model != Model::Angle && self.angle_fraction.is_some() {
            return bad("angle_fraction only applies to the angle model".into());
        }
        if let Some(BurnIn::Auto(a)) = self.burn_in {
            if a.window == 0 || a.consecutive == 0 || !(a.threshold > 0.0) {
                return bad("auto burn-in needs positive window, consecutive and threshold".into());
            }
        }
        if let Some(edges) = &self.lambda_bins {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("lambda_bins must be strictly increasing with at least 2 edges".into());
            }
            if !self.distributed() {
                return bad("lambda_bins need distributed propensities".into());
            }
        }
        self.binning.build(self.money_per_agent)?;
        if let Some(t) = &self.track_richest {
            if self.model != Model::DistributedSavings || self.annealed() {
                return bad("track_richest needs quenched distributed_savings".into());
            }
            if matches!(self.burn_in, Some(BurnIn::Auto(_))) {
                return bad("track_richest needs a fixed burn_in".into());
            }
            if let Some(l) = t.pinned_lambda_max {
                if !(0.0..1.0).contains(&l) {
                    return bad(format!("pinned_lambda_max = {l} outside [0, 1)"));
                }
                let lo = self.lambda_spec.as_ref().map_or(0.0, |s| s.support().0);
                if lo >= l {
                    return bad(format!("pinned_lambda_max = {l} is not above the support"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_json_with_defaults() {
        let c: SimConfig = serde_json::from_str(
            r#"{"model": "no_savings", "N": 100, "mc_steps": 1000, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(c.agents, 100);
        assert_eq!(c.money_per_agent, 1.0);
        assert_eq!(c.sample_interval, 10);
        assert_eq!(c.effective_burn_in(), BurnIn::Steps(10_000));
        c.validate().unwrap();
    }

    #[test]
    fn parses_full_json() {
        let c: SimConfig = serde_json::from_str(
            r#"{
                "model": "distributed_savings", "agents": 50, "mc_steps": 10, "seed": 1,
                "lambda_spec": {"kind": "power_about_one", "delta": 0.5},
                "epsilon_mode": {"fixed": 0.5},
                "burn_in": {"auto": {"window": 10, "threshold": 0.1, "consecutive": 2, "max_steps": 1000}},
                "binning": {"kind": "linear", "lo": 0, "hi": 10, "bins": 100},
                "lambda_bins": [0, 0.5, 1],
                "track_richest": null
            }"#,
        )
        .unwrap();
        assert_eq!(c.epsilon_mode, EpsilonMode::Fixed(0.5));
        assert!(matches!(c.burn_in, Some(BurnIn::Auto(_))));
        c.validate().unwrap();
        let round: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = serde_json::from_str::<SimConfig>(
            r#"{"model": "no_savings", "N": 100, "mc_steps": 1, "seed": 7, "thetta": 0.1}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn validation_errors() {
        let base = SimConfig::new(Model::NoSavings, 10, 10, 0);
        assert!(SimConfig { agents: 1, ..base.clone() }.validate().is_err());
        assert!(SimConfig { theta: 0.1, ..base.clone() }.validate().is_err());
        assert!(SimConfig { burn_in_theta: Some(0.5), ..base.clone() }.validate().is_err());
        assert!(SimConfig { model: Model::UniformSavings, ..base.clone() }.validate().is_err());
        assert!(SimConfig { model: Model::Angle, ..base.clone() }.validate().is_err());
        assert!(SimConfig { ensembles: 0, ..base.clone() }.validate().is_err());
        let c = SimConfig {
            model: Model::UniformSavings,
            lambda_spec: Some(LambdaDistSpec::uniform()),
            ..base
        };
        assert!(c.validate().is_err());
    }
}
