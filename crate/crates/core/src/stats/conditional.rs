use serde::{Deserialize, Serialize};

use super::histogram::{Binning, Histogram};
use super::StatsError;

/// Money statistics of the agents whose propensity falls in one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBinStats {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub count: usize,
    pub mean_lambda: f64,
    pub mean_money: f64,
    /// Centre of the most populated bin of the money density.
    pub most_probable: f64,
    /// Average of `m * (1 - lambda)` over the bin's observations.
    pub product: f64,
}

/// Groups `(lambda, money)` observations by propensity bin. Bins without
/// observations are `None`.
pub fn conditional_money_by_lambda(
    observations: &[(f64, f64)],
    lambda_edges: &[f64],
) -> Result<Vec<Option<LambdaBinStats>>, StatsError> {
    if lambda_edges.len() < 2 || lambda_edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StatsError::Binning("lambda edges must be strictly increasing".into()));
    }
    let bins = lambda_edges.len() - 1;
    let mut grouped: Vec<Vec<(f64, f64)>> = vec![Vec::new(); bins];
    for &(lambda, money) in observations {
        if lambda < lambda_edges[0] || lambda >= lambda_edges[bins] {
            continue;
        }
        let k = lambda_edges.partition_point(|&e| e <= lambda) - 1;
        grouped[k].push((lambda, money));
    }
    grouped
        .into_iter()
        .enumerate()
        .map(|(k, obs)| {
            if obs.is_empty() {
                return Ok(None);
            }
            let n = obs.len() as f64;
            let mean_lambda = obs.iter().map(|o| o.0).sum::<f64>() / n;
            let mean_money = obs.iter().map(|o| o.1).sum::<f64>() / n;
            let product = obs.iter().map(|o| o.1 * (1.0 - o.0)).sum::<f64>() / n;
            Ok(Some(LambdaBinStats {
                lambda_lo: lambda_edges[k],
                lambda_hi: lambda_edges[k + 1],
                count: obs.len(),
                mean_lambda,
                mean_money,
                most_probable: most_probable(&obs)?,
                product,
            }))
        })
        .collect()
}

/// Mergeable per-propensity-bin accumulator for streaming observations on a
/// fixed money binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalAccumulator {
    pub lambda_edges: Vec<f64>,
    pub count: Vec<u64>,
    pub sum_lambda: Vec<f64>,
    pub sum_money: Vec<f64>,
    pub sum_product: Vec<f64>,
    pub money: Vec<Histogram>,
}

impl ConditionalAccumulator {
    pub fn new(lambda_edges: Vec<f64>, money_binning: &Binning) -> Result<Self, StatsError> {
        if lambda_edges.len() < 2 || lambda_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StatsError::Binning("lambda edges must be strictly increasing".into()));
        }
        let bins = lambda_edges.len() - 1;
        Ok(Self {
            lambda_edges,
            count: vec![0; bins],
            sum_lambda: vec![0.0; bins],
            sum_money: vec![0.0; bins],
            sum_product: vec![0.0; bins],
            money: vec![Histogram::new(money_binning.clone()); bins],
        })
    }

    /// Index of the propensity bin holding `lambda`, if any.
    #[inline]
    pub fn bin_of(&self, lambda: f64) -> Option<usize> {
        let bins = self.count.len();
        if lambda < self.lambda_edges[0] || lambda >= self.lambda_edges[bins] {
            return None;
        }
        Some(self.lambda_edges.partition_point(|&e| e <= lambda) - 1)
    }

    #[inline]
    pub fn add_to_bin(&mut self, k: usize, lambda: f64, money: f64) {
        self.count[k] += 1;
        self.sum_lambda[k] += lambda;
        self.sum_money[k] += money;
        self.sum_product[k] += money * (1.0 - lambda);
        self.money[k].add(money);
    }

    pub fn add(&mut self, lambda: f64, money: f64) {
        if let Some(k) = self.bin_of(lambda) {
            self.add_to_bin(k, lambda, money);
        }
    }

    /// Adds `other` bin by bin. Floating sums depend on merge order, so
    /// callers that need reproducibility merge in a fixed order.
    pub fn merge(&mut self, other: &Self) -> Result<(), StatsError> {
        if self.lambda_edges != other.lambda_edges {
            return Err(StatsError::Binning("cannot merge different lambda bins".into()));
        }
        for k in 0..self.count.len() {
            self.count[k] += other.count[k];
            self.sum_lambda[k] += other.sum_lambda[k];
            self.sum_money[k] += other.sum_money[k];
            self.sum_product[k] += other.sum_product[k];
            self.money[k].merge(&other.money[k])?;
        }
        Ok(())
    }

    pub fn finish(&self) -> Vec<Option<LambdaBinStats>> {
        (0..self.count.len())
            .map(|k| {
                if self.count[k] == 0 {
                    return None;
                }
                let n = self.count[k] as f64;
                let h = &self.money[k];
                let mode = (0..h.counts.len())
                    .max_by(|&i, &j| {
                        let di = h.counts[i] as f64 / h.binning.width(i);
                        let dj = h.counts[j] as f64 / h.binning.width(j);
                        di.total_cmp(&dj)
                    })
                    .map(|i| h.binning.center(i))
                    .unwrap_or(f64::NAN);
                Some(LambdaBinStats {
                    lambda_lo: self.lambda_edges[k],
                    lambda_hi: self.lambda_edges[k + 1],
                    count: self.count[k] as usize,
                    mean_lambda: self.sum_lambda[k] / n,
                    mean_money: self.sum_money[k] / n,
                    most_probable: mode,
                    product: self.sum_product[k] / n,
                })
            })
            .collect()
    }
}

/// Mode of the money density on a 16-per-decade logarithmic grid.
fn most_probable(obs: &[(f64, f64)]) -> Result<f64, StatsError> {
    let positive = obs.iter().map(|o| o.1).filter(|&m| m > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    if !lo.is_finite() {
        return Ok(0.0);
    }
    let mut h = Histogram::new(Binning::logarithmic(lo, hi, 16)?);
    h.extend(obs.iter().map(|o| o.1));
    let k = (0..h.counts.len())
        .max_by(|&i, &j| {
            let di = h.counts[i] as f64 / h.binning.width(i);
            let dj = h.counts[j] as f64 / h.binning.width(j);
            di.total_cmp(&dj)
        })
        .unwrap_or(0);
    Ok(h.binning.center(k))
}
