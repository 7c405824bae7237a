use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::histogram::{Binning, DistributionEstimate, Histogram};
use super::{StatsError, BINS_PER_DECADE};

/// Which pairs of agents contribute a difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairSampling {
    /// Every unordered pair `i < j` of each snapshot.
    All,
    /// `pairs` random pairs with `i != j` per snapshot.
    Random { pairs: usize, seed: u64 },
}

fn differences(snapshot: &[f64], sampling: PairSampling, stream: u64) -> Vec<f64> {
    let n = snapshot.len();
    match sampling {
        PairSampling::All => {
            let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    out.push((snapshot[i] - snapshot[j]).abs());
                }
            }
            out
        }
        PairSampling::Random { pairs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            (0..pairs)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    (snapshot[i] - snapshot[j]).abs()
                })
                .collect()
        }
    }
}

/// One histogram of `|m_i - m_j|` per snapshot, on a shared binning, for
/// fits with per-snapshot resampling errors.
pub fn pairwise_difference_histograms(
    snapshots: &[Vec<f64>],
    sampling: PairSampling,
    binning: &Binning,
) -> Result<Vec<Histogram>, StatsError> {
    if snapshots.iter().any(|s| s.len() < 2) || snapshots.is_empty() {
        return Err(StatsError::Argument("each snapshot needs at least two agents".into()));
    }
    Ok(snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut h = Histogram::new(binning.clone());
            h.extend(differences(s, sampling, k as u64));
            h
        })
        .collect())
}

/// Distribution of the absolute money difference between pairs of agents,
/// pooled over snapshots, on a logarithmic grid. Zero differences land in the
/// underflow bin.
pub fn pairwise_difference_distribution(
    snapshots: &[Vec<f64>],
    sampling: PairSampling,
) -> Result<DistributionEstimate, StatsError> {
    if snapshots.iter().any(|s| s.len() < 2) || snapshots.is_empty() {
        return Err(StatsError::Argument("each snapshot needs at least two agents".into()));
    }
    let all: Vec<f64> = snapshots
        .iter()
        .enumerate()
        .flat_map(|(k, s)| differences(s, sampling, k as u64))
        .collect();
    let (lo, hi) = all
        .iter()
        .filter(|&&d| d > 0.0)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !lo.is_finite() {
        // Every difference is zero: a point mass at the origin.
        let mut h = Histogram::new(Binning::linear(0.0, 1.0, 1)?);
        h.extend(all);
        return h.estimate();
    }
    let mut h = Histogram::new(Binning::logarithmic(lo, hi, BINS_PER_DECADE)?);
    h.extend(all);
    h.estimate()
}
