use serde::{Deserialize, Serialize};

use crate::stats::{Binning, Histogram};

/// Detects stationarity from a stream of windowed histograms: the burn-in is
/// over once the L1 distance between the normalised histograms of successive
/// windows stays below `threshold` for `consecutive` comparisons in a row.
#[derive(Debug, Clone)]
pub struct BurnInDetector {
    threshold: f64,
    consecutive: u32,
    previous: Option<Vec<f64>>,
    windows_seen: u64,
    streak: u32,
    streak_start: u64,
    distances: Vec<f64>,
}

/// What the detector saw, for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInReport {
    /// Index of the first window of the stationary run, if one was found.
    pub stationary_from_window: Option<u64>,
    pub distances: Vec<f64>,
}

impl BurnInDetector {
    pub fn new(threshold: f64, consecutive: u32) -> Self {
        Self {
            threshold,
            consecutive: consecutive.max(1),
            previous: None,
            windows_seen: 0,
            streak: 0,
            streak_start: 0,
            distances: Vec::new(),
        }
    }

    /// Coarse grid used for the window histograms: 8 bins per decade over
    /// six decades around `scale`. Coarse bins keep the sampling noise of the
    /// distance well below typical thresholds.
    pub fn monitor_binning(scale: f64) -> Binning {
        Binning::logarithmic(1e-3 * scale, 1e3 * scale, 8).expect("fixed valid grid")
    }

    /// Feeds the histogram of the next window. Returns the index of the
    /// window where the stationary run began once it is confirmed.
    pub fn push(&mut self, window: &Histogram) -> Option<u64> {
        let total = window.total().max(1) as f64;
        let mut current: Vec<f64> = window.counts.iter().map(|&c| c as f64 / total).collect();
        current.push(window.underflow as f64 / total);
        current.push(window.overflow as f64 / total);
        let index = self.windows_seen;
        self.windows_seen += 1;
        let previous = self.previous.replace(current);
        let Some(previous) = previous else {
            return None;
        };
        let current = self.previous.as_ref().expect("just stored");
        let d: f64 = previous.iter().zip(current).map(|(a, b)| (a - b).abs()).sum();
        self.distances.push(d);
        if d < self.threshold {
            if self.streak == 0 {
                self.streak_start = index - 1;
            }
            self.streak += 1;
            if self.streak >= self.consecutive {
                return Some(self.streak_start);
            }
        } else {
            self.streak = 0;
        }
        None
    }

    pub fn report(&self) -> BurnInReport {
        BurnInReport {
            stationary_from_window: (self.streak >= self.consecutive).then_some(self.streak_start),
            distances: self.distances.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(values: &[f64]) -> Histogram {
        let mut h = Histogram::new(BurnInDetector::monitor_binning(1.0));
        h.extend(values.iter().copied());
        h
    }

    #[test]
    fn stationary_stream_returns_first_window() {
        let mut d = BurnInDetector::new(0.01, 3);
        let h = hist(&[0.5, 1.0, 2.0, 3.0]);
        assert_eq!(d.push(&h), None);
        assert_eq!(d.push(&h), None);
        assert_eq!(d.push(&h), None);
        assert_eq!(d.push(&h), Some(0));
    }

    #[test]
    fn drifting_then_stationary() {
        let mut d = BurnInDetector::new(0.01, 2);
        let a = hist(&[1.0; 10]);
        let b = hist(&[10.0; 10]);
        assert_eq!(d.push(&a), None);
        assert_eq!(d.push(&b), None);
        assert_eq!(d.push(&a), None);
        assert_eq!(d.push(&a), None);
        assert_eq!(d.push(&a), Some(2));
        assert_eq!(d.report().distances, vec![2.0, 2.0, 0.0, 0.0]);
    }
}
