//! Saving-propensity distributions.
//!
//! A [`LambdaDistSpec`] describes how saving propensities are spread over the
//! population. Quenched specs hand every agent one value for the whole run;
//! the annealed spec hands every agent a lower bound `mu` and the propensity
//! is redrawn uniformly from `[mu, 1)` at every trade the agent takes part in.
//!
//! Specs serialise as JSON objects with a `"kind"` discriminator:
//!
//! ```json
//! {"kind": "uniform_interval", "lo": 0.0, "hi": 1.0}
//! {"kind": "power_about_one", "delta": 0.5}
//! {"kind": "mixed", "fraction": 0.6, "lambda1": 0.6,
//!  "rest": {"kind": "uniform_interval", "lo": 0.0, "hi": 1.0}}
//! {"kind": "annealed_lower_bound", "zeta": {"kind": "uniform_interval", "lo": 0.0, "hi": 1.0}}
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, NumericError};

/// Largest propensity ever produced; an agent with `lambda == 1` would never
/// release any money.
pub const LAMBDA_CAP: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LambdaError {
    #[error("invalid lambda distribution: {0}")]
    Invalid(String),
    #[error("population size {0} is below 2")]
    Population(usize),
    #[error("annealed lower bound mu = {0} is outside [0, 1)")]
    LowerBound(f64),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaDistSpec {
    /// Every agent has the same propensity.
    Fixed { value: f64 },
    /// Uniform on `[lo, hi)`; `hi == 1` means the support reaches one.
    UniformInterval { lo: f64, hi: f64 },
    /// Density proportional to `|lambda0 - lambda|^delta` on `[0, 1)`.
    PowerAboutLambda0 { lambda0: f64, delta: f64 },
    /// Density proportional to `(1 - lambda)^delta` on `[0, 1)`.
    PowerAboutOne { delta: f64 },
    /// `round(fraction * N)` agents get `lambda1`, the rest are drawn from
    /// `rest`.
    Mixed { fraction: f64, lambda1: f64, rest: Box<LambdaDistSpec> },
    /// Annealed savings: each agent's lower bound `mu` is drawn from `zeta`.
    AnnealedLowerBound { zeta: Box<LambdaDistSpec> },
}

impl LambdaDistSpec {
    pub fn uniform() -> Self {
        Self::UniformInterval { lo: 0.0, hi: 1.0 }
    }

    pub fn is_annealed(&self) -> bool {
        matches!(self, Self::AnnealedLowerBound { .. })
    }

    pub fn validate(&self) -> Result<(), LambdaError> {
        let bad = |msg: String| Err(LambdaError::Invalid(msg));
        match self {
            Self::Fixed { value } => {
                if !(0.0..1.0).contains(value) {
                    return bad(format!("fixed value {value} outside [0, 1)"));
                }
            }
            Self::UniformInterval { lo, hi } => {
                if !(0.0 <= *lo && lo <= hi && *hi <= 1.0) {
                    return bad(format!("interval [{lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"));
                }
                if lo == hi && *hi >= 1.0 {
                    return bad("degenerate interval at 1".into());
                }
            }
            Self::PowerAboutLambda0 { lambda0, delta } => {
                if !(0.0..1.0).contains(lambda0) {
                    return bad(format!("lambda0 = {lambda0} outside [0, 1)"));
                }
                if !(*delta > -1.0 && delta.is_finite()) {
                    return bad(format!("delta = {delta} must exceed -1"));
                }
            }
            Self::PowerAboutOne { delta } => {
                if !(*delta > -1.0 && delta.is_finite()) {
                    return bad(format!("delta = {delta} must exceed -1"));
                }
            }
            Self::Mixed { fraction, lambda1, rest } => {
                if !(0.0..=1.0).contains(fraction) {
                    return bad(format!("mixture fraction {fraction} outside [0, 1]"));
                }
                if !(0.0..1.0).contains(lambda1) {
                    return bad(format!("lambda1 = {lambda1} outside [0, 1)"));
                }
                if rest.is_annealed() {
                    return bad("mixture residual cannot be annealed".into());
                }
                rest.validate()?;
            }
            Self::AnnealedLowerBound { zeta } => {
                if zeta.is_annealed() {
                    return bad("annealed specs cannot be nested".into());
                }
                zeta.validate()?;
            }
        }
        Ok(())
    }

    /// Draws one value from a quenched spec. For an annealed spec this draws a
    /// lower bound `mu` from `zeta`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let value = match self {
            Self::Fixed { value } => *value,
            Self::UniformInterval { lo, hi } => lo + (hi - lo) * u,
            Self::PowerAboutLambda0 { lambda0, delta } => {
                power_about_lambda0_quantile(*lambda0, *delta, u)
            }
            Self::PowerAboutOne { delta } => 1.0 - (1.0 - u).powf(1.0 / (delta + 1.0)),
            Self::Mixed { rest, .. } => return rest.sample_one(rng),
            Self::AnnealedLowerBound { zeta } => return zeta.sample_one(rng),
        };
        value.clamp(0.0, LAMBDA_CAP)
    }

    /// Normalised density at `lambda`. For the mixture only the continuous
    /// part is returned (the atom at `lambda1` carries the remaining mass);
    /// the fixed spec has no continuous part. For the annealed spec this is
    /// the marginal density of the per-trade propensity.
    pub fn density(&self, lambda: f64) -> Result<f64, LambdaError> {
        if !(0.0..1.0).contains(&lambda) {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Fixed { .. } => 0.0,
            Self::UniformInterval { lo, hi } => {
                if lambda >= *lo && lambda < *hi && hi > lo {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::PowerAboutLambda0 { lambda0, delta } => {
                let norm = (lambda0.powf(delta + 1.0) + (1.0 - lambda0).powf(delta + 1.0))
                    / (delta + 1.0);
                (lambda0 - lambda).abs().powf(*delta) / norm
            }
            Self::PowerAboutOne { delta } => (delta + 1.0) * (1.0 - lambda).powf(*delta),
            Self::Mixed { fraction, rest, .. } => (1.0 - fraction) * rest.density(lambda)?,
            Self::AnnealedLowerBound { zeta } => {
                // lambda | mu is uniform on [mu, 1): integrate zeta(mu) / (1 - mu)
                // over mu <= lambda, plus the atoms of zeta.
                let atoms: f64 = zeta
                    .atoms()
                    .iter()
                    .filter(|(mu, _)| *mu <= lambda)
                    .map(|(mu, w)| w / (1.0 - mu))
                    .sum();
                let continuous = numeric::integrate(
                    |mu| zeta.density(mu).unwrap_or(0.0) / (1.0 - mu),
                    0.0,
                    lambda,
                    1e-13,
                )?;
                atoms + continuous
            }
        })
    }

    /// Point masses `(location, weight)` of the distribution.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Fixed { value } => vec![(*value, 1.0)],
            Self::Mixed { fraction, lambda1, rest } => {
                let mut atoms = vec![(*lambda1, *fraction)];
                atoms.extend(rest.atoms().into_iter().map(|(x, w)| (x, w * (1.0 - fraction))));
                atoms
            }
            Self::UniformInterval { lo, hi } if lo == hi => vec![(*lo, 1.0)],
            _ => Vec::new(),
        }
    }

    /// Expectation of `f(lambda)` under the distribution. Continuous parts
    /// are integrated in probability space, `int_0^1 f(Q(u)) du` with `Q` the
    /// quantile function, which removes the integrable density singularities
    /// at the ends of the support. The annealed marginal is integrated
    /// against its density.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, tolerance: f64) -> Result<f64, LambdaError> {
        self.expectation_dyn(&f, tolerance)
    }

    fn expectation_dyn(&self, f: &dyn Fn(f64) -> f64, tolerance: f64) -> Result<f64, LambdaError> {
        let over_u = |q: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
            numeric::integrate(|u| f(q(u).clamp(0.0, LAMBDA_CAP)), lo, hi, tolerance)
        };
        Ok(match self {
            Self::Fixed { value } => f(*value),
            Self::UniformInterval { lo, hi } if lo == hi => f(*lo),
            Self::UniformInterval { lo, hi } => over_u(&|u| lo + (hi - lo) * u, 0.0, 1.0)?,
            Self::PowerAboutOne { delta } => {
                over_u(&|u| 1.0 - (1.0 - u).powf(1.0 / (delta + 1.0)), 0.0, 1.0)?
            }
            Self::PowerAboutLambda0 { lambda0, delta } => {
                let p = delta + 1.0;
                let left = lambda0.powf(p);
                let split = left / (left + (1.0 - lambda0).powf(p));
                let q = |u: f64| power_about_lambda0_quantile(*lambda0, *delta, u);
                let mut total = 0.0;
                if split > 0.0 {
                    total += over_u(&q, 0.0, split)?;
                }
                if split < 1.0 {
                    total += over_u(&q, split, 1.0)?;
                }
                total
            }
            Self::Mixed { fraction, lambda1, rest } => {
                let mut total = fraction * f(*lambda1);
                if *fraction < 1.0 {
                    total += (1.0 - fraction) * rest.expectation_dyn(f, tolerance)?;
                }
                total
            }
            // lambda | mu is uniform on [mu, 1).
            Self::AnnealedLowerBound { zeta } => {
                let inner = |mu: f64| {
                    numeric::integrate(|u| f(annealed_draw(mu, u)), 0.0, 1.0, tolerance)
                        .unwrap_or(f64::NAN)
                };
                let v = zeta.expectation_dyn(&inner, tolerance)?;
                if !v.is_finite() {
                    return Err(NumericError::NonFinite(v).into());
                }
                v
            }
        })
    }

    /// Closure of the support, as `(lo, hi)` with `hi <= 1`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Fixed { value } => (*value, *value),
            Self::UniformInterval { lo, hi } => (*lo, *hi),
            Self::PowerAboutLambda0 { .. } | Self::PowerAboutOne { .. } => (0.0, 1.0),
            Self::Mixed { lambda1, rest, fraction } => {
                let (lo, hi) = rest.support();
                if *fraction > 0.0 {
                    (lo.min(*lambda1), hi.max(*lambda1))
                } else {
                    (lo, hi)
                }
            }
            Self::AnnealedLowerBound { zeta } => (zeta.support().0, 1.0),
        }
    }
}

/// Inverse CDF of the density proportional to `|l0 - x|^delta` on `[0, 1)`.
fn power_about_lambda0_quantile(l0: f64, delta: f64, u: f64) -> f64 {
    let p = delta + 1.0;
    let left = l0.powf(p);
    let right = (1.0 - l0).powf(p);
    let target = u * (left + right);
    if target < left {
        l0 - (left - target).powf(1.0 / p)
    } else {
        l0 + (target - left).powf(1.0 / p)
    }
}

/// One propensity per agent, fixed for the whole run.
///
/// For the mixture the first `round(fraction * N)` agents get `lambda1`. For
/// the annealed spec the returned values are the per-agent lower bounds.
pub fn sample_quenched<R: Rng + ?Sized>(
    spec: &LambdaDistSpec,
    population: usize,
    rng: &mut R,
) -> Result<Vec<f64>, LambdaError> {
    if population < 2 {
        return Err(LambdaError::Population(population));
    }
    spec.validate()?;
    Ok(match spec {
        LambdaDistSpec::Mixed { fraction, lambda1, rest } => {
            let fixed = (fraction * population as f64).round() as usize;
            (0..population)
                .map(|i| if i < fixed { *lambda1 } else { rest.sample_one(rng) })
                .collect()
        }
        _ => (0..population).map(|_| spec.sample_one(rng)).collect(),
    })
}

/// Per-trade propensity of an annealed agent with lower bound `mu`.
pub fn sample_annealed<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<f64, LambdaError> {
    if !(0.0..1.0).contains(&mu) {
        return Err(LambdaError::LowerBound(mu));
    }
    Ok(annealed_draw(mu, rng.random()))
}

#[inline]
pub(crate) fn annealed_draw(mu: f64, u: f64) -> f64 {
    (mu + (1.0 - mu) * u).min(LAMBDA_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    fn mean_and_sigma(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn uniform_mean() {
        let xs = sample_quenched(&LambdaDistSpec::uniform(), 200_000, &mut rng()).unwrap();
        let (mean, sigma) = mean_and_sigma(&xs);
        assert!((mean - 0.5).abs() < 3.0 * sigma / (xs.len() as f64).sqrt());
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn power_about_one_mean() {
        let spec = LambdaDistSpec::PowerAboutOne { delta: 1.0 };
        let xs = sample_quenched(&spec, 200_000, &mut rng()).unwrap();
        let (mean, sigma) = mean_and_sigma(&xs);
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * sigma / (xs.len() as f64).sqrt(), "{mean}");
    }

    #[test]
    fn interval_support() {
        let spec = LambdaDistSpec::UniformInterval { lo: 0.5, hi: 0.9 };
        let xs = sample_quenched(&spec, 50_000, &mut rng()).unwrap();
        assert!(xs.iter().all(|&x| (0.5..=0.9).contains(&x)));
    }

    #[test]
    fn mixture_assigns_exact_count() {
        let spec = LambdaDistSpec::Mixed {
            fraction: 0.6,
            lambda1: 0.6,
            rest: Box::new(LambdaDistSpec::uniform()),
        };
        let xs = sample_quenched(&spec, 201, &mut rng()).unwrap();
        // round(0.6 * 201) = round(120.6) = 121
        assert!(xs[..121].iter().all(|&x| x == 0.6));
        assert_eq!(xs.iter().filter(|&&x| x == 0.6).count(), 121);
    }

    #[test]
    fn annealed_draws_respect_bound() {
        let mut r = rng();
        for _ in 0..10_000 {
            assert!(sample_annealed(0.9, &mut r).unwrap() >= 0.9);
        }
        let xs: Vec<f64> = (0..100_000).map(|_| sample_annealed(0.0, &mut r).unwrap()).collect();
        let (mean, sigma) = mean_and_sigma(&xs);
        assert!((mean - 0.5).abs() < 3.0 * sigma / (xs.len() as f64).sqrt());
        assert_eq!(sample_annealed(1.0, &mut r), Err(LambdaError::LowerBound(1.0)));
    }

    #[test]
    fn densities() {
        assert_eq!(LambdaDistSpec::uniform().density(0.3).unwrap(), 1.0);
        assert_eq!(LambdaDistSpec::PowerAboutOne { delta: 1.0 }.density(0.0).unwrap(), 2.0);
        assert_eq!(LambdaDistSpec::uniform().density(1.0).unwrap(), 0.0);
        assert_eq!(LambdaDistSpec::uniform().density(-0.1).unwrap(), 0.0);
        let spec = LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.0, delta: -0.7 };
        let expected = 0.3 * 0.5f64.powf(-0.7);
        assert!((spec.density(0.5).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn densities_integrate_to_one() {
        let specs = [
            LambdaDistSpec::uniform(),
            LambdaDistSpec::UniformInterval { lo: 0.2, hi: 0.7 },
            LambdaDistSpec::PowerAboutOne { delta: 0.5 },
            LambdaDistSpec::PowerAboutOne { delta: -0.5 },
            LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.0, delta: -0.7 },
            LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.4, delta: -0.3 },
            LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.3, delta: 2.0 },
            LambdaDistSpec::AnnealedLowerBound { zeta: Box::new(LambdaDistSpec::uniform()) },
        ];
        for spec in specs {
            let total = spec.expectation(|_| 1.0, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "{spec:?}: {total}");
        }
    }

    #[test]
    fn annealed_marginal_is_minus_log() {
        let spec = LambdaDistSpec::AnnealedLowerBound { zeta: Box::new(LambdaDistSpec::uniform()) };
        for &x in &[0.1, 0.5, 0.9, 0.99] {
            let d = spec.density(x).unwrap();
            assert!((d + f64::ln(1.0 - x)).abs() < 1e-10, "{x}: {d}");
        }
    }

    #[test]
    fn serde_kind_discriminator() {
        let json = r#"{"kind":"mixed","fraction":0.6,"lambda1":0.6,
                       "rest":{"kind":"uniform_interval","lo":0.0,"hi":1.0}}"#;
        let spec: LambdaDistSpec = serde_json::from_str(json).unwrap();
        assert_eq!(
            spec,
            LambdaDistSpec::Mixed {
                fraction: 0.6,
                lambda1: 0.6,
                rest: Box::new(LambdaDistSpec::uniform())
            }
        );
        let typo = r#"{"kind":"power_about_one","detla":0.5}"#;
        assert!(serde_json::from_str::<LambdaDistSpec>(typo).is_err());
    }

    #[test]
    fn malformed_specs() {
        let bad = [
            LambdaDistSpec::Fixed { value: 1.0 },
            LambdaDistSpec::UniformInterval { lo: 0.7, hi: 0.2 },
            LambdaDistSpec::UniformInterval { lo: 0.0, hi: 1.5 },
            LambdaDistSpec::PowerAboutOne { delta: -1.0 },
            LambdaDistSpec::PowerAboutLambda0 { lambda0: 1.0, delta: 0.0 },
            LambdaDistSpec::Mixed {
                fraction: 1.2,
                lambda1: 0.5,
                rest: Box::new(LambdaDistSpec::uniform()),
            },
        ];
        for spec in bad {
            assert!(sample_quenched(&spec, 10, &mut rng()).is_err(), "{spec:?}");
        }
        assert_eq!(
            sample_quenched(&LambdaDistSpec::uniform(), 1, &mut rng()),
            Err(LambdaError::Population(1))
        );
    }
}
