//! Monte Carlo driver.
//!
//! One Monte Carlo step is `N` pair trades. Each ensemble owns a ChaCha8
//! generator seeded with the master seed and switched to stream number
//! `ensemble_index`, so a run is reproducible for any thread count.
//! Ensembles run in parallel and their outputs are merged in index order.

mod burn_in;
mod config;
mod richest;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{self, AgentState, KernelError, SavingsRule, TradeDraw};
use crate::lambda::{self, LambdaDistSpec, LambdaError};
use crate::stats::{ConditionalAccumulator, Histogram, LambdaBinStats, StatsError};

pub use burn_in::{BurnInDetector, BurnInReport};
pub use config::{
    AutoBurnIn, BinningSpec, BurnIn, EpsilonMode, InitialCondition, Model, RichestTracking,
    SimConfig,
};
pub use richest::{log_log_slope, relaxation_time, RichestTrace, RELAXATION_TOLERANCE};

/// Relative tolerance of the money and commodity conservation audit.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;
/// Consecutive rejected commodity trades, per agent, before giving up.
pub const LIVELOCK_PER_AGENT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(
        "{quantity} not conserved in ensemble {ensemble} at step {step}: \
         expected {expected}, found {actual}"
    )]
    Conservation { quantity: String, ensemble: usize, step: u64, expected: f64, actual: f64 },
    #[error("commodity market stuck in ensemble {ensemble} at step {step}: {rejections} rejections in a row")]
    Livelock { ensemble: usize, step: u64, rejections: u64 },
    #[error("burn-in not detected in ensemble {ensemble} after {steps} steps; window distances {distances:?}")]
    BurnIn { ensemble: usize, steps: u64, distances: Vec<f64> },
    #[error("could not draw propensities below the pinned maximum {0}")]
    Pinned(f64),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Uniformly random ordered pair of distinct agents. Every unordered pair is
/// equally likely and either order is equally likely.
///
/// Both indices come from the two 32-bit halves of one 64-bit draw, each
/// mapped to its range by multiply-shift with rejection, so the result is
/// exactly uniform.
#[inline]
pub fn select_pair<R: Rng + ?Sized>(agents: usize, rng: &mut R) -> (usize, usize) {
    debug_assert!((2..=u32::MAX as usize).contains(&agents));
    let n = agents as u32;
    let x = rng.next_u64();
    let i = bounded(x as u32, n, rng);
    let mut j = bounded((x >> 32) as u32, n - 1, rng);
    if j >= i {
        j += 1;
    }
    (i as usize, j as usize)
}

/// Lemire's multiply-shift map of a uniform `u32` onto `0..n`, redrawing in
/// the rare biased zone.
#[inline]
fn bounded<R: Rng + ?Sized>(mut x: u32, n: u32, rng: &mut R) -> u32 {
    let mut m = x as u64 * n as u64;
    if (m as u32) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u32) < threshold {
            x = rng.next_u32();
            m = x as u64 * n as u64;
        }
    }
    (m >> 32) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub ensemble: usize,
    pub agent: usize,
    /// Quenched propensity, or the lower bound `mu` when annealed.
    pub lambda: f64,
    pub mean_money: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub index: usize,
    pub burn_in_steps: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Largest single-agent share of the total money at the end of the run.
    pub max_share: f64,
    pub max_money_error: f64,
    pub max_commodity_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationAudit {
    pub checks: u64,
    pub max_money_error: f64,
    pub max_commodity_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub money: Histogram,
    pub money_by_ensemble: Vec<Histogram>,
    pub commodity: Option<Histogram>,
    pub commodity_by_ensemble: Option<Vec<Histogram>>,
    pub wealth: Option<Histogram>,
    pub wealth_by_ensemble: Option<Vec<Histogram>>,
    pub difference: Option<Histogram>,
    pub difference_by_ensemble: Option<Vec<Histogram>>,
    pub conditional: Option<Vec<Option<LambdaBinStats>>>,
    pub agents: Option<Vec<AgentRecord>>,
    pub final_snapshots: Option<Vec<Vec<f64>>>,
    pub richest: Option<RichestTrace>,
    pub ensembles: Vec<EnsembleSummary>,
    pub audit: ConservationAudit,
}

impl SimResult {
    /// Sampled agent-observations per ensemble.
    pub fn observations_per_ensemble(&self) -> u64 {
        self.config.agents as u64 * (self.config.mc_steps / self.config.sample_interval)
    }
}

struct EnsembleOutput {
    money: Histogram,
    commodity: Option<Histogram>,
    wealth: Option<Histogram>,
    difference: Option<Histogram>,
    conditional: Option<ConditionalAccumulator>,
    agents: Option<Vec<AgentRecord>>,
    snapshot: Option<Vec<f64>>,
    richest: Option<(f64, Vec<f64>)>,
    summary: EnsembleSummary,
    checks: u64,
}

/// Fixed per-run trade parameters.
#[derive(Clone, Copy)]
struct Rule {
    model: Model,
    epsilon: EpsilonMode,
    theta: f64,
    angle_fraction: f64,
    uniform_lambda: f64,
    savings: SavingsRule,
    annealed: bool,
}

impl Rule {
    fn new(config: &SimConfig) -> Self {
        let uniform_lambda = match &config.lambda_spec {
            Some(LambdaDistSpec::Fixed { value }) => *value,
            _ => 0.0,
        };
        let savings = match &config.lambda_spec {
            None => SavingsRule::None,
            Some(LambdaDistSpec::Fixed { value }) => SavingsRule::Uniform(*value),
            Some(_) => SavingsRule::Distributed,
        };
        Self {
            model: config.model,
            epsilon: config.epsilon_mode,
            theta: config.theta,
            angle_fraction: config.angle_fraction.unwrap_or(0.5),
            uniform_lambda,
            savings,
            annealed: config.annealed(),
        }
    }
}

struct Market {
    money: Vec<f64>,
    /// Quenched propensities, or annealed lower bounds.
    lambda: Vec<f64>,
    commodity: Option<Vec<f64>>,
}

impl Market {
    /// One trade attempt; returns whether it was accepted.
    #[inline]
    fn trade(&mut self, rule: &Rule, rng: &mut ChaCha8Rng) -> Result<bool, KernelError> {
        let (i, j) = select_pair(self.money.len(), rng);
        let epsilon = match rule.epsilon {
            EpsilonMode::Random => rng.random::<f64>(),
            EpsilonMode::Fixed(e) => e,
        };
        let (li, lj) = if rule.annealed {
            (
                lambda::annealed_draw(self.lambda[i], rng.random()),
                lambda::annealed_draw(self.lambda[j], rng.random()),
            )
        } else {
            (self.lambda[i], self.lambda[j])
        };
        let mut draw = TradeDraw::with_epsilon(epsilon);
        let (ci, cj) = match &self.commodity {
            Some(c) => (Some(c[i]), Some(c[j])),
            None => (None, None),
        };
        let a = AgentState { money: self.money[i], lambda: li, commodity: ci };
        let b = AgentState { money: self.money[j], lambda: lj, commodity: cj };
        let out = match rule.model {
            Model::NoSavings => kernels::trade_no_savings(a, b, draw)?,
            Model::UniformSavings => {
                kernels::trade_uniform_savings(a, b, rule.uniform_lambda, draw)?
            }
            Model::DistributedSavings => kernels::trade_distributed_savings(a, b, draw)?,
            Model::Angle => {
                draw.angle_direction = rng.random();
                kernels::trade_angle(a, b, rule.angle_fraction, draw)?
            }
            Model::MinimumExchange => kernels::trade_minimum_exchange(a, b, draw)?,
            Model::Commodity => {
                draw.price_up = rng.random();
                kernels::trade_commodity(a, b, draw, rule.theta, rule.savings)?
            }
        };
        if out.accepted {
            self.money[i] = out.a.money;
            self.money[j] = out.b.money;
            if let Some(c) = &mut self.commodity {
                c[i] = out.a.commodity.unwrap_or(c[i]);
                c[j] = out.b.commodity.unwrap_or(c[j]);
            }
        }
        Ok(out.accepted)
    }
}

fn relative_error(values: &[f64], expected: f64) -> f64 {
    (values.iter().sum::<f64>() - expected).abs() / expected
}

/// Splits `total` in proportion to fresh uniform draws; the last share is
/// the remainder so the sum is exact up to one rounding.
fn random_split(total: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = u.iter().sum();
    let mut out: Vec<f64> = u.iter().map(|x| total * x / s).collect();
    let head: f64 = out[..n - 1].iter().sum();
    out[n - 1] = (total - head).max(0.0);
    out
}

fn draw_propensities(
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Option<usize>), EngineError> {
    let n = config.agents;
    let spec = match &config.lambda_spec {
        Some(spec) if config.model != Model::UniformSavings => spec,
        _ => return Ok((vec![0.0; n], None)),
    };
    let spec = match spec {
        LambdaDistSpec::AnnealedLowerBound { zeta } => zeta.as_ref(),
        s => s,
    };
    let mut lambdas = lambda::sample_quenched(spec, n, rng)?;
    let Some(tracking) = config.track_richest else {
        return Ok((lambdas, None));
    };
    match tracking.pinned_lambda_max {
        Some(max) => {
            let redraw_from = match spec {
                LambdaDistSpec::Mixed { rest, .. } => rest.as_ref(),
                s => s,
            };
            for l in lambdas.iter_mut().skip(1) {
                let mut tries = 0;
                while *l >= max {
                    tries += 1;
                    if tries > 1_000_000 {
                        return Err(EngineError::Pinned(max));
                    }
                    *l = redraw_from.sample_one(rng);
                }
            }
            lambdas[0] = max;
            Ok((lambdas, Some(0)))
        }
        None => {
            let k = (0..n).fold(0, |k, i| if lambdas[i] > lambdas[k] { i } else { k });
            Ok((lambdas, Some(k)))
        }
    }
}

fn run_ensemble(config: &SimConfig, index: usize) -> Result<EnsembleOutput, EngineError> {
    let n = config.agents;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let rule = Rule::new(config);
    let burn_in_rule = Rule { theta: config.burn_in_theta.unwrap_or(config.theta), ..rule };
    let (lambdas, tracked) = draw_propensities(config, &mut rng)?;

    let total_money = config.total_money();
    let commodity_mode = config.model == Model::Commodity;
    let total_commodity = config.commodity_per_agent * n as f64;
    let (money, commodity) = match config.initial {
        InitialCondition::Uniform => (
            vec![config.money_per_agent; n],
            commodity_mode.then(|| vec![config.commodity_per_agent; n]),
        ),
        InitialCondition::Random => {
            let m = random_split(total_money, n, &mut rng);
            let c = commodity_mode.then(|| random_split(total_commodity, n, &mut rng));
            (m, c)
        }
    };
    let mut market = Market { money, lambda: lambdas, commodity };
    // Reference totals are the sums actually handed out, so the audit
    // measures drift of the dynamics alone.
    let money_ref = market.money.iter().sum::<f64>();
    let commodity_ref = market.commodity.as_ref().map(|c| c.iter().sum::<f64>());

    let mut summary = EnsembleSummary {
        index,
        burn_in_steps: 0,
        accepted: 0,
        rejected: 0,
        max_share: 0.0,
        max_money_error: 0.0,
        max_commodity_error: 0.0,
    };
    let mut checks = 0u64;
    let mut step = 0u64;
    let mut rejections_in_a_row = 0u64;
    let livelock = LIVELOCK_PER_AGENT * n as u64;
    let mut richest_series = tracked.map(|k| vec![market.money[k]]);

    macro_rules! mc_step {
        ($rule:expr) => {{
            for _ in 0..n {
                if market.trade($rule, &mut rng)? {
                    summary.accepted += 1;
                    rejections_in_a_row = 0;
                } else {
                    summary.rejected += 1;
                    rejections_in_a_row += 1;
                    if rejections_in_a_row > livelock {
                        return Err(EngineError::Livelock {
                            ensemble: index,
                            step,
                            rejections: rejections_in_a_row,
                        });
                    }
                }
            }
            step += 1;
            if let (Some(k), Some(series)) = (tracked, richest_series.as_mut()) {
                series.push(market.money[k]);
            }
        }};
    }

    let mut audit = |market: &Market, step: u64, summary: &mut EnsembleSummary| {
        checks += 1;
        let e = relative_error(&market.money, money_ref);
        summary.max_money_error = summary.max_money_error.max(e);
        if !(e <= CONSERVATION_TOLERANCE) {
            return Err(EngineError::Conservation {
                quantity: "money".into(),
                ensemble: index,
                step,
                expected: money_ref,
                actual: market.money.iter().sum(),
            });
        }
        if let (Some(c), Some(c_ref)) = (&market.commodity, commodity_ref) {
            let e = relative_error(c, c_ref);
            summary.max_commodity_error = summary.max_commodity_error.max(e);
            if !(e <= CONSERVATION_TOLERANCE) {
                return Err(EngineError::Conservation {
                    quantity: "commodity".into(),
                    ensemble: index,
                    step,
                    expected: c_ref,
                    actual: c.iter().sum(),
                });
            }
        }
        Ok(())
    };

    match config.effective_burn_in() {
        BurnIn::Steps(b) => {
            for _ in 0..b {
                mc_step!(&burn_in_rule);
            }
            summary.burn_in_steps = b;
        }
        BurnIn::Auto(auto) => {
            let mut detector = BurnInDetector::new(auto.threshold, auto.consecutive);
            let binning = BurnInDetector::monitor_binning(config.money_per_agent);
            loop {
                let mut window = Histogram::new(binning.clone());
                for _ in 0..auto.window {
                    mc_step!(&burn_in_rule);
                    window.extend(market.money.iter().copied());
                }
                if let Some(start) = detector.push(&window) {
                    summary.burn_in_steps = start * auto.window;
                    break;
                }
                if step >= auto.max_steps {
                    return Err(EngineError::BurnIn {
                        ensemble: index,
                        steps: step,
                        distances: detector.report().distances,
                    });
                }
            }
        }
    }
    audit(&market, step, &mut summary)?;

    let money_binning = config.binning.build(config.money_per_agent)?;
    let mut money_hist = Histogram::new(money_binning.clone());
    let mut commodity_hist = if commodity_mode {
        Some(Histogram::new(config.binning.build(config.commodity_per_agent)?))
    } else {
        None
    };
    let mut wealth_hist = if commodity_mode {
        Some(Histogram::new(
            config.binning.build(config.money_per_agent + config.commodity_per_agent)?,
        ))
    } else {
        None
    };
    let mut difference_hist =
        (config.difference_pairs > 0).then(|| Histogram::new(money_binning.clone()));
    let mut conditional = match &config.lambda_bins {
        Some(edges) => Some(ConditionalAccumulator::new(edges.clone(), &money_binning)?),
        None => None,
    };
    let lambda_bin: Vec<Option<usize>> = match &conditional {
        Some(acc) => market.lambda.iter().map(|&l| acc.bin_of(l)).collect(),
        None => Vec::new(),
    };
    let mut money_sums = config.record_agents.then(|| vec![0.0; n]);
    let mut samples = 0u64;

    for s in 1..=config.mc_steps {
        mc_step!(&rule);
        if s % config.sample_interval != 0 {
            continue;
        }
        samples += 1;
        money_hist.extend(market.money.iter().copied());
        if let (Some(h), Some(c)) = (commodity_hist.as_mut(), market.commodity.as_ref()) {
            h.extend(c.iter().copied());
        }
        if let (Some(h), Some(c)) = (wealth_hist.as_mut(), market.commodity.as_ref()) {
            h.extend(market.money.iter().zip(c).map(|(m, c)| m + c));
        }
        if let Some(h) = difference_hist.as_mut() {
            for _ in 0..config.difference_pairs {
                let (i, j) = select_pair(n, &mut rng);
                h.add((market.money[i] - market.money[j]).abs());
            }
        }
        if let Some(acc) = conditional.as_mut() {
            for (i, k) in lambda_bin.iter().enumerate() {
                if let Some(k) = *k {
                    acc.add_to_bin(k, market.lambda[i], market.money[i]);
                }
            }
        }
        if let Some(sums) = money_sums.as_mut() {
            for (s, m) in sums.iter_mut().zip(&market.money) {
                *s += m;
            }
        }
        audit(&market, step, &mut summary)?;
    }
    audit(&market, step, &mut summary)?;

    summary.max_share = market.money.iter().fold(0.0f64, |a, &m| a.max(m)) / money_ref;
    let agents = money_sums.map(|sums| {
        sums.iter()
            .enumerate()
            .map(|(agent, s)| AgentRecord {
                ensemble: index,
                agent,
                lambda: market.lambda[agent],
                mean_money: if samples > 0 { s / samples as f64 } else { f64::NAN },
            })
            .collect()
    });
    let richest = match (tracked, richest_series) {
        (Some(k), Some(series)) => Some((market.lambda[k], series)),
        _ => None,
    };
    Ok(EnsembleOutput {
        money: money_hist,
        commodity: commodity_hist,
        wealth: wealth_hist,
        difference: difference_hist,
        conditional,
        agents,
        snapshot: config.keep_final_snapshots.then(|| market.money.clone()),
        richest,
        summary,
        checks,
    })
}

/// Runs every ensemble on the current rayon pool and merges the results.
pub fn run(config: &SimConfig) -> Result<SimResult, EngineError> {
    config.validate()?;
    let outputs: Vec<EnsembleOutput> = (0..config.ensembles)
        .into_par_iter()
        .map(|k| run_ensemble(config, k))
        .collect::<Result<_, _>>()?;
    merge(config, outputs)
}

/// [`run`] on a dedicated pool of `threads` workers (0 means rayon's default).
pub fn run_with_threads(config: &SimConfig, threads: usize) -> Result<SimResult, EngineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    pool.install(|| run(config))
}

fn merge_into(acc: &mut Option<Histogram>, h: &Option<Histogram>) -> Result<(), EngineError> {
    match (acc.as_mut(), h) {
        (Some(a), Some(h)) => a.merge(h)?,
        (None, Some(h)) => *acc = Some(h.clone()),
        _ => {}
    }
    Ok(())
}

fn merge(config: &SimConfig, outputs: Vec<EnsembleOutput>) -> Result<SimResult, EngineError> {
    let mut money = Histogram::new(config.binning.build(config.money_per_agent)?);
    let mut commodity = None;
    let mut wealth = None;
    let mut difference = None;
    let mut conditional: Option<ConditionalAccumulator> = None;
    let mut agents: Option<Vec<AgentRecord>> = None;
    let mut snapshots: Option<Vec<Vec<f64>>> = None;
    let mut lambda_max = Vec::new();
    let mut series_sum: Option<Vec<f64>> = None;
    let mut audit = ConservationAudit {
        checks: 0,
        max_money_error: 0.0,
        max_commodity_error: 0.0,
        tolerance: CONSERVATION_TOLERANCE,
    };
    let mut summaries = Vec::with_capacity(outputs.len());
    let mut money_by_ensemble = Vec::with_capacity(outputs.len());
    let mut commodity_by_ensemble = Vec::new();
    let mut wealth_by_ensemble = Vec::new();
    let mut difference_by_ensemble = Vec::new();
    for out in outputs {
        money.merge(&out.money)?;
        merge_into(&mut commodity, &out.commodity)?;
        merge_into(&mut wealth, &out.wealth)?;
        merge_into(&mut difference, &out.difference)?;
        if let Some(c) = &out.conditional {
            match conditional.as_mut() {
                Some(acc) => acc.merge(c)?,
                None => conditional = Some(c.clone()),
            }
        }
        if let Some(a) = out.agents {
            agents.get_or_insert_with(Vec::new).extend(a);
        }
        if let Some(s) = out.snapshot {
            snapshots.get_or_insert_with(Vec::new).push(s);
        }
        if let Some((l, series)) = out.richest {
            lambda_max.push(l);
            match series_sum.as_mut() {
                Some(sum) => sum.iter_mut().zip(&series).for_each(|(a, b)| *a += b),
                None => series_sum = Some(series),
            }
        }
        audit.checks += out.checks;
        audit.max_money_error = audit.max_money_error.max(out.summary.max_money_error);
        audit.max_commodity_error =
            audit.max_commodity_error.max(out.summary.max_commodity_error);
        money_by_ensemble.push(out.money);
        if let Some(c) = out.commodity {
            commodity_by_ensemble.push(c);
        }
        if let Some(w) = out.wealth {
            wealth_by_ensemble.push(w);
        }
        if let Some(d) = out.difference {
            difference_by_ensemble.push(d);
        }
        summaries.push(out.summary);
    }
    let richest = series_sum.map(|sum| {
        let k = lambda_max.len() as f64;
        RichestTrace::from_series(lambda_max, sum.into_iter().map(|s| s / k).collect())
    });
    Ok(SimResult {
        config: config.clone(),
        money,
        money_by_ensemble,
        commodity,
        commodity_by_ensemble: (!commodity_by_ensemble.is_empty()).then_some(commodity_by_ensemble),
        wealth,
        wealth_by_ensemble: (!wealth_by_ensemble.is_empty()).then_some(wealth_by_ensemble),
        difference,
        difference_by_ensemble: (!difference_by_ensemble.is_empty())
            .then_some(difference_by_ensemble),
        conditional: conditional.map(|c| c.finish()),
        agents,
        final_snapshots: snapshots,
        richest,
        ensembles: summaries,
        audit,
    })
}
