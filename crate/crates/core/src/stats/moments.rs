use serde::{Deserialize, Serialize};

use super::StatsError;

/// Raw moment `<m^order>` with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub order: u32,
    pub value: f64,
    pub stderr: f64,
}

/// Raw moments of orders `1..=max_order` (at most 4) with delete-one
/// jackknife errors.
pub fn moments(samples: &[f64], max_order: u32) -> Result<Vec<Moment>, StatsError> {
    moments_blocked(samples, max_order, samples.len())
}

/// Raw moments with a blocked jackknife: the samples are cut into `blocks`
/// contiguous blocks and one block is deleted at a time. Use a few dozen
/// blocks for time-correlated Monte Carlo output.
pub fn moments_blocked(
    samples: &[f64],
    max_order: u32,
    blocks: usize,
) -> Result<Vec<Moment>, StatsError> {
    if !(1..=4).contains(&max_order) {
        return Err(StatsError::Argument(format!("moment order {max_order} outside 1..=4")));
    }
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let blocks = blocks.clamp(1, samples.len());
    let n = samples.len();
    let orders = max_order as usize;
    // Per-block power sums, in a fixed order so results are reproducible.
    let mut sums = vec![[0.0f64; 4]; blocks];
    let mut sizes = vec![0usize; blocks];
    for (i, &x) in samples.iter().enumerate() {
        let b = i * blocks / n;
        let mut p = 1.0;
        for k in 0..orders {
            p *= x;
            sums[b][k] += p;
        }
        sizes[b] += 1;
    }
    let mut out = Vec::with_capacity(orders);
    for k in 0..orders {
        let total: f64 = sums.iter().map(|s| s[k]).sum();
        let value = total / n as f64;
        let stderr = if blocks < 2 {
            f64::NAN
        } else {
            let reps: Vec<f64> = (0..blocks)
                .map(|b| (total - sums[b][k]) / (n - sizes[b]) as f64)
                .collect();
            let mean = reps.iter().sum::<f64>() / blocks as f64;
            let g = blocks as f64;
            ((g - 1.0) / g * reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>()).sqrt()
        };
        out.push(Moment { order: k as u32 + 1, value, stderr });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data() {
        let xs = vec![1.5; 100];
        for m in moments(&xs, 4).unwrap() {
            assert_eq!(m.value, 1.5f64.powi(m.order as i32));
            assert_eq!(m.stderr, 0.0);
        }
    }

    #[test]
    fn delete_one_jackknife_of_mean_is_standard_error() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        let m = moments(&xs, 1).unwrap()[0];
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m.stderr - (s2 / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn order_is_checked() {
        assert!(moments(&[1.0], 5).is_err());
        assert!(moments(&[1.0], 0).is_err());
        assert!(matches!(moments(&[], 2), Err(StatsError::Empty)));
    }
}
