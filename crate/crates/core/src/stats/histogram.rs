use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningKind {
    Linear,
    Logarithmic,
}

/// Bin edges. Values below the first edge go to the underflow bin (this is
/// where exact zeros land on a logarithmic grid), values at or above the last
/// edge to the overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBinning", into = "RawBinning")]
pub struct Binning {
    pub kind: BinningKind,
    pub edges: Vec<f64>,
    // Cached for the logarithmic lookup.
    log_lo: f64,
    per_log_unit: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBinning {
    kind: BinningKind,
    edges: Vec<f64>,
}

impl TryFrom<RawBinning> for Binning {
    type Error = StatsError;

    fn try_from(raw: RawBinning) -> Result<Self, StatsError> {
        Binning::from_edges(raw.kind, raw.edges)
    }
}

impl From<Binning> for RawBinning {
    fn from(b: Binning) -> Self {
        RawBinning { kind: b.kind, edges: b.edges }
    }
}

pub enum Slot {
    Underflow,
    Bin(usize),
    Overflow,
}

impl Binning {
    pub fn linear(lo: f64, hi: f64, bins: usize) -> Result<Self, StatsError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo && bins > 0) {
            return Err(StatsError::Binning(format!("linear [{lo}, {hi}) with {bins} bins")));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        Ok(Self { kind: BinningKind::Linear, edges, log_lo: 0.0, per_log_unit: 0.0 })
    }

    /// Logarithmic bins starting at `lo`, `bins_per_decade` per factor of ten,
    /// extended until the last edge exceeds `hi`.
    pub fn logarithmic(lo: f64, hi: f64, bins_per_decade: usize) -> Result<Self, StatsError> {
        if !(lo > 0.0 && hi.is_finite() && hi >= lo && bins_per_decade > 0) {
            return Err(StatsError::Binning(format!(
                "logarithmic [{lo}, {hi}) with {bins_per_decade} bins per decade"
            )));
        }
        let per_decade = bins_per_decade as f64;
        let bins = (((hi / lo).log10() * per_decade).floor() as usize + 1).max(1);
        let edges = (0..=bins).map(|k| lo * 10f64.powf(k as f64 / per_decade)).collect();
        Ok(Self::from_edges_unchecked(BinningKind::Logarithmic, edges))
    }

    /// Rebuilds a binning from explicit edges, e.g. when reading a histogram
    /// file back.
    pub fn from_edges(kind: BinningKind, edges: Vec<f64>) -> Result<Self, StatsError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StatsError::Binning("edges must be strictly increasing".into()));
        }
        if kind == BinningKind::Logarithmic && edges[0] <= 0.0 {
            return Err(StatsError::Binning("logarithmic edges must be positive".into()));
        }
        Ok(Self::from_edges_unchecked(kind, edges))
    }

    fn from_edges_unchecked(kind: BinningKind, edges: Vec<f64>) -> Self {
        let (log_lo, per_log_unit) = match kind {
            BinningKind::Logarithmic => {
                let n = edges.len() - 1;
                let log_lo = edges[0].ln();
                (log_lo, n as f64 / (edges[n].ln() - log_lo))
            }
            BinningKind::Linear => (0.0, 0.0),
        };
        Self { kind, edges, log_lo, per_log_unit }
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.bins()]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    /// Representative point of bin `k`: geometric centre for logarithmic
    /// bins, arithmetic centre for linear ones.
    pub fn center(&self, k: usize) -> f64 {
        match self.kind {
            BinningKind::Linear => 0.5 * (self.edges[k] + self.edges[k + 1]),
            BinningKind::Logarithmic => (self.edges[k] * self.edges[k + 1]).sqrt(),
        }
    }

    #[inline]
    pub fn locate(&self, x: f64) -> Slot {
        let edges = &self.edges;
        if !(x >= edges[0]) {
            return Slot::Underflow;
        }
        let n = edges.len() - 1;
        if x >= edges[n] {
            return Slot::Overflow;
        }
        let guess = match self.kind {
            BinningKind::Linear => ((x - edges[0]) / (edges[n] - edges[0]) * n as f64) as usize,
            BinningKind::Logarithmic => ((x.ln() - self.log_lo) * self.per_log_unit) as usize,
        };
        let mut k = guess.min(n - 1);
        while k > 0 && x < edges[k] {
            k -= 1;
        }
        while k + 1 < n && x >= edges[k + 1] {
            k += 1;
        }
        Slot::Bin(k)
    }
}

/// Integer-count histogram. Merging is plain addition, so any merge order
/// gives the same result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    /// Smallest and largest value added so far; infinite while empty.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_pos_inf")]
    pub min: f64,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_neg_inf")]
    pub max: f64,
}

// JSON has no infinities, so an empty histogram's bounds travel as `null`.
fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_some(x)
    } else {
        s.serialize_none()
    }
}

fn null_as_pos_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn null_as_neg_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

impl Histogram {
    pub fn new(binning: Binning) -> Self {
        let bins = binning.bins();
        Self {
            binning,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        match self.binning.locate(x) {
            Slot::Underflow => self.underflow += 1,
            Slot::Bin(k) => self.counts[k] += 1,
            Slot::Overflow => self.overflow += 1,
        }
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn extend<I: IntoIterator<Item = f64>>(&mut self, values: I) {
        for x in values {
            self.add(x);
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), StatsError> {
        if self.binning.edges != other.binning.edges {
            return Err(StatsError::Binning("cannot merge histograms with different edges".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        Ok(())
    }

    /// `self - other`, for delete-one-group resampling.
    pub(crate) fn without(&self, other: &Histogram) -> Histogram {
        let mut out = self.clone();
        for (c, o) in out.counts.iter_mut().zip(&other.counts) {
            *c -= o;
        }
        out.underflow -= other.underflow;
        out.overflow -= other.overflow;
        out
    }

    pub fn estimate(&self) -> Result<DistributionEstimate, StatsError> {
        DistributionEstimate::from_histogram(self)
    }
}

/// Normalised density estimate with its binning metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEstimate {
    pub binning: Binning,
    pub counts: Vec<u64>,
    /// `count / (total * width)` per regular bin.
    pub density: Vec<f64>,
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
    /// Smallest and largest observed value.
    pub support: (f64, f64),
}

impl DistributionEstimate {
    pub fn from_histogram(h: &Histogram) -> Result<Self, StatsError> {
        let total = h.total();
        if total == 0 {
            return Err(StatsError::Empty);
        }
        let density = h
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 / (total as f64 * h.binning.width(k)))
            .collect();
        Ok(Self {
            binning: h.binning.clone(),
            counts: h.counts.clone(),
            density,
            total,
            underflow: h.underflow,
            overflow: h.overflow,
            support: (h.min, h.max),
        })
    }

    /// Log-binned estimate anchored at the smallest positive sample, so that
    /// rescaling every sample rescales every edge.
    pub fn from_samples_log(samples: &[f64], bins_per_decade: usize) -> Result<Self, StatsError> {
        check_samples(samples)?;
        let (lo, hi) = positive_range(samples).ok_or(StatsError::Empty)?;
        let mut h = Histogram::new(Binning::logarithmic(lo, hi, bins_per_decade)?);
        h.extend(samples.iter().copied());
        Self::from_histogram(&h)
    }

    pub fn from_samples_linear(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self, StatsError> {
        check_samples(samples)?;
        let mut h = Histogram::new(Binning::linear(lo, hi, bins)?);
        h.extend(samples.iter().copied());
        Self::from_histogram(&h)
    }

    pub fn to_histogram(&self) -> Histogram {
        Histogram {
            binning: self.binning.clone(),
            counts: self.counts.clone(),
            underflow: self.underflow,
            overflow: self.overflow,
            min: self.support.0,
            max: self.support.1,
        }
    }

    /// Total probability: binned density times width, plus the underflow and
    /// overflow fractions.
    pub fn integral(&self) -> f64 {
        let binned: f64 = self
            .density
            .iter()
            .enumerate()
            .map(|(k, d)| d * self.binning.width(k))
            .sum();
        binned + (self.underflow + self.overflow) as f64 / self.total as f64
    }

    /// Fraction of observations at or above each edge, `Q(e_k)`.
    pub fn ccdf_at_edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        let mut q = vec![0.0; n + 1];
        let mut above = self.overflow;
        q[n] = above as f64 / self.total as f64;
        for k in (0..n).rev() {
            above += self.counts[k];
            q[k] = above as f64 / self.total as f64;
        }
        q
    }

    /// Mean of the binned data using bin centres (the underflow bin counts at
    /// half its upper edge, overflow at the largest observation).
    pub fn binned_raw_moment(&self, order: i32) -> f64 {
        let lo = self.binning.lo();
        let under = if lo > 0.0 { (0.5 * lo).powi(order) } else { 0.0 };
        let mut sum = self.underflow as f64 * under + self.overflow as f64 * self.support.1.powi(order);
        for (k, &c) in self.counts.iter().enumerate() {
            sum += c as f64 * self.binning.center(k).powi(order);
        }
        sum / self.total as f64
    }
}

fn check_samples(samples: &[f64]) -> Result<(), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&x) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(StatsError::InvalidSample(x));
    }
    Ok(())
}

fn positive_range(samples: &[f64]) -> Option<(f64, f64)> {
    samples
        .iter()
        .filter(|&&x| x > 0.0)
        .fold(None, |acc, &x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((f64::min(lo, x), f64::max(hi, x))),
        })
}

/// Empirical complementary CDF `Q(x) = P(X >= x)` of raw samples, evaluated
/// at each distinct sample value in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
}

impl Ccdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self.x.iter().position(|&v| v >= x) {
            Some(k) => self.q[k],
            None => 0.0,
        }
    }
}

pub fn ccdf(samples: &[f64]) -> Result<Ccdf, StatsError> {
    check_samples(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut x = Vec::new();
    let mut q = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if x.last() != Some(&v) {
            x.push(v);
            q.push((sorted.len() - i) as f64 / n);
        }
    }
    Ok(Ccdf { x, q })
}

/// Complementary CDF of a binned estimate, at the bin edges.
pub fn ccdf_from_estimate(estimate: &DistributionEstimate) -> Ccdf {
    Ccdf { x: estimate.binning.edges.clone(), q: estimate.ccdf_at_edges() }
}
