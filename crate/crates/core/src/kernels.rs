//! Two-agent trade rules.
//!
//! Every kernel takes the states of the two traders plus the random inputs of
//! one trade and returns the updated pair. Kernels are pure: all randomness is
//! supplied by the caller through [`TradeDraw`], so the same arguments always
//! produce the same outcome.
//!
//! Money is measured in units of the average money per agent, so a freshly
//! initialised market has every agent at `money == 1.0`.

use thiserror::Error;

/// Rejects inputs outside a kernel's domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("sharing fraction epsilon = {0} is outside [0, 1]")]
    Epsilon(f64),
    #[error("saving propensity lambda = {0} is outside [0, 1)")]
    Lambda(f64),
    #[error("exchange fraction w = {0} is outside (0, 1)")]
    AngleFraction(f64),
    #[error("price noise theta = {0} is outside [0, 1)")]
    Theta(f64),
    #[error("agent money {0} is negative or not finite")]
    Money(f64),
    #[error("commodity trade between agents without commodity holdings")]
    MissingCommodity,
}

/// Holdings of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub money: f64,
    /// Quenched saving propensity, `0 <= lambda < 1`.
    pub lambda: f64,
    /// Only present in the commodity market.
    pub commodity: Option<f64>,
}

impl AgentState {
    pub fn new(money: f64) -> Self {
        Self { money, lambda: 0.0, commodity: None }
    }

    pub fn with_lambda(money: f64, lambda: f64) -> Self {
        Self { money, lambda, commodity: None }
    }

    pub fn with_commodity(money: f64, lambda: f64, commodity: f64) -> Self {
        Self { money, lambda, commodity: Some(commodity) }
    }

    /// Money plus commodity valued at the global price of one.
    pub fn wealth(&self) -> f64 {
        self.money + self.commodity.unwrap_or(0.0)
    }
}

/// Random inputs of a single trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeDraw {
    /// Fraction of the traded pool that goes to the first agent.
    pub epsilon: f64,
    /// Direction bit of the inequality process: `true` means the first agent
    /// takes from the second.
    pub angle_direction: bool,
    /// `true` selects the price `1 + theta`, `false` selects `1 - theta`.
    pub price_up: bool,
}

impl TradeDraw {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, angle_direction: false, price_up: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeOutcome {
    pub a: AgentState,
    pub b: AgentState,
    /// False only for an infeasible commodity trade, in which case `a` and
    /// `b` are the inputs unchanged.
    pub accepted: bool,
}

impl TradeOutcome {
    fn accepted(a: AgentState, b: AgentState) -> Self {
        Self { a, b, accepted: true }
    }

    fn rejected(a: AgentState, b: AgentState) -> Self {
        Self { a, b, accepted: false }
    }
}

/// How the money part of a commodity trade is split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SavingsRule {
    /// Random split of the whole pair's money.
    None,
    /// Every agent saves the same fraction.
    Uniform(f64),
    /// Each agent saves its own `lambda`.
    Distributed,
}

fn check_epsilon(epsilon: f64) -> Result<(), KernelError> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(KernelError::Epsilon(epsilon))
    }
}

fn check_lambda(lambda: f64) -> Result<(), KernelError> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(KernelError::Lambda(lambda))
    }
}

fn check_money(money: f64) -> Result<(), KernelError> {
    if money >= 0.0 && money.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Money(money))
    }
}

/// Splits `pool` as `epsilon : 1 - epsilon`. The second share is computed as
/// the remainder so that the two shares add back to `pool`.
#[inline]
fn split(pool: f64, epsilon: f64) -> (f64, f64) {
    let first = epsilon * pool;
    (first, (pool - first).max(0.0))
}

/// Random reshuffle of the pair's entire money.
pub fn trade_no_savings(
    a: AgentState,
    b: AgentState,
    draw: TradeDraw,
) -> Result<TradeOutcome, KernelError> {
    check_epsilon(draw.epsilon)?;
    check_money(a.money)?;
    check_money(b.money)?;
    let (ma, mb) = split(a.money + b.money, draw.epsilon);
    Ok(TradeOutcome::accepted(AgentState { money: ma, ..a }, AgentState { money: mb, ..b }))
}

/// Both agents keep `lambda` of their money and reshuffle the rest.
pub fn trade_uniform_savings(
    a: AgentState,
    b: AgentState,
    lambda: f64,
    draw: TradeDraw,
) -> Result<TradeOutcome, KernelError> {
    check_lambda(lambda)?;
    check_epsilon(draw.epsilon)?;
    check_money(a.money)?;
    check_money(b.money)?;
    let (ma, mb) = savings_split(a.money, lambda, b.money, lambda, draw.epsilon);
    Ok(TradeOutcome::accepted(AgentState { money: ma, ..a }, AgentState { money: mb, ..b }))
}

/// Each agent keeps its own `lambda` fraction; the unsaved parts are pooled
/// and split at random. The agents' `lambda` fields are left untouched.
pub fn trade_distributed_savings(
    a: AgentState,
    b: AgentState,
    draw: TradeDraw,
) -> Result<TradeOutcome, KernelError> {
    check_lambda(a.lambda)?;
    check_lambda(b.lambda)?;
    check_epsilon(draw.epsilon)?;
    check_money(a.money)?;
    check_money(b.money)?;
    let (ma, mb) = savings_split(a.money, a.lambda, b.money, b.lambda, draw.epsilon);
    Ok(TradeOutcome::accepted(AgentState { money: ma, ..a }, AgentState { money: mb, ..b }))
}

/// Shared arithmetic of the three savings rules. With `la == lb == 0` this is
/// bit-for-bit the no-savings split.
#[inline]
fn savings_split(ma: f64, la: f64, mb: f64, lb: f64, epsilon: f64) -> (f64, f64) {
    let kept_a = la * ma;
    let kept_b = lb * mb;
    let pool = (ma - kept_a) + (mb - kept_b);
    let (share_a, _) = split(pool, epsilon);
    let new_a = kept_a + share_a;
    // The second agent gets whatever is left of the pair total, which keeps
    // the pair sum conserved to rounding of a single subtraction.
    let new_b = ((ma + mb) - new_a).max(0.0);
    (new_a, new_b)
}

/// One-parameter inequality process: a fixed fraction `w` of the loser's
/// money moves to the winner, the winner picked by `draw.angle_direction`.
pub fn trade_angle(
    a: AgentState,
    b: AgentState,
    w: f64,
    draw: TradeDraw,
) -> Result<TradeOutcome, KernelError> {
    if !(w > 0.0 && w < 1.0) {
        return Err(KernelError::AngleFraction(w));
    }
    check_money(a.money)?;
    check_money(b.money)?;
    let (ma, mb) = if draw.angle_direction {
        let moved = w * b.money;
        (a.money + moved, b.money - moved)
    } else {
        let moved = w * a.money;
        (a.money - moved, b.money + moved)
    };
    Ok(TradeOutcome::accepted(AgentState { money: ma, ..a }, AgentState { money: mb, ..b }))
}

/// Each trader stakes the smaller of the two holdings; the stake pool is split
/// at random. An agent with zero money can never gain anything again.
pub fn trade_minimum_exchange(
    a: AgentState,
    b: AgentState,
    draw: TradeDraw,
) -> Result<TradeOutcome, KernelError> {
    check_epsilon(draw.epsilon)?;
    check_money(a.money)?;
    check_money(b.money)?;
    let stake = a.money.min(b.money);
    let (share_a, _) = split(2.0 * stake, draw.epsilon);
    let ma = (a.money - stake) + share_a;
    let mb = ((a.money + b.money) - ma).max(0.0);
    Ok(TradeOutcome::accepted(AgentState { money: ma, ..a }, AgentState { money: mb, ..b }))
}

/// Money-for-commodity trade at a noisy price `1 +- theta`.
///
/// The money moves according to `rule`; each agent's commodity changes by
/// `-dm / p` where `dm` is its own money change, so money and commodity are
/// conserved separately. Trades that would leave either agent with negative
/// commodity are rejected and return the inputs.
pub fn trade_commodity(
    a: AgentState,
    b: AgentState,
    draw: TradeDraw,
    theta: f64,
    rule: SavingsRule,
) -> Result<TradeOutcome, KernelError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(KernelError::Theta(theta));
    }
    let (ca, cb) = match (a.commodity, b.commodity) {
        (Some(ca), Some(cb)) => (ca, cb),
        _ => return Err(KernelError::MissingCommodity),
    };
    let money = match rule {
        SavingsRule::None => trade_no_savings(a, b, draw)?,
        SavingsRule::Uniform(lambda) => trade_uniform_savings(a, b, lambda, draw)?,
        SavingsRule::Distributed => trade_distributed_savings(a, b, draw)?,
    };
    let price = if draw.price_up { 1.0 + theta } else { 1.0 - theta };
    let dm_a = money.a.money - a.money;
    // dm_b == -dm_a up to rounding; using the exact negation keeps the
    // commodity total conserved to a single rounding.
    let dc = dm_a / price;
    let new_ca = ca - dc;
    let new_cb = (ca + cb) - new_ca;
    if new_ca < 0.0 || new_cb < 0.0 {
        return Ok(TradeOutcome::rejected(a, b));
    }
    Ok(TradeOutcome::accepted(
        AgentState { commodity: Some(new_ca), ..money.a },
        AgentState { commodity: Some(new_cb), ..money.b },
    ))
}
