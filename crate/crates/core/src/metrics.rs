//! Per-block metrics, exact order statistics and time-bucket downsampling.

use serde::{Deserialize, Serialize};

use crate::model::{ChainRef, MetricKind, MetricSample, NormalizedBlockRecord, SummaryStats};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("block {0} has a zero effective gas limit")]
    ZeroLimit(u64),
    #[error("sample for block {number} is out of order for {chain}/{kind}")]
    OutOfOrder {
        chain: String,
        kind: MetricKind,
        number: u64,
    },
    #[error("sample belongs to {found}, series is {expected}")]
    WrongSeries { expected: String, found: String },
}

/// Effective gas price of the block in gwei.
pub fn gas_price_sample(record: &NormalizedBlockRecord) -> MetricSample {
    MetricSample {
        chain: record.header.chain.clone(),
        block_number: record.header.number,
        timestamp: record.header.timestamp,
        kind: MetricKind::GasPriceGwei,
        value: record.effective_gas_price.gwei(),
    }
}

/// Gas used over the effective gas limit. Not clamped: a value above 1 means the
/// record carries `UsageExceedsEffectiveLimit`.
pub fn block_usage_sample(record: &NormalizedBlockRecord) -> Result<MetricSample, MetricsError> {
    let limit = record.effective_gas_limit.0;
    if limit == 0 {
        return Err(MetricsError::ZeroLimit(record.header.number));
    }
    Ok(MetricSample {
        chain: record.header.chain.clone(),
        block_number: record.header.number,
        timestamp: record.header.timestamp,
        kind: MetricKind::BlockUsageRatio,
        value: record.header.gas_used.0 as f64 / limit as f64,
    })
}

/// Quantile of ascending `sorted` data at probability `p`, by linear interpolation
/// between order statistics at rank `h = (n - 1) p + 1` (1-based).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi {
        return a;
    }
    // keep within [a, b] under rounding
    (a + (h - lo as f64) * (b - a)).clamp(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

fn sorted_copy(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles, MetricsError> {
    let sorted = sorted_copy(values)?;
    Ok(Quartiles {
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats, MetricsError> {
    let sorted = sorted_copy(values)?;
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(SummaryStats {
        count: sorted.len(),
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

/// Samples of one metric on one chain, ordered by block number.
#[derive(Debug, Clone)]
pub struct Series {
    chain: ChainRef,
    kind: MetricKind,
    samples: Vec<MetricSample>,
}

impl Series {
    pub fn new(chain: ChainRef, kind: MetricKind) -> Self {
        Self {
            chain,
            kind,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: MetricSample) -> Result<(), MetricsError> {
        if sample.chain != self.chain || sample.kind != self.kind {
            return Err(MetricsError::WrongSeries {
                expected: format!("{}/{}", self.chain, self.kind),
                found: format!("{}/{}", sample.chain, sample.kind),
            });
        }
        if !sample.value.is_finite() {
            return Err(MetricsError::NonFinite);
        }
        if let Some(last) = self.samples.last() {
            if sample.block_number <= last.block_number || sample.timestamp < last.timestamp {
                return Err(MetricsError::OutOfOrder {
                    chain: self.chain.name.clone(),
                    kind: self.kind,
                    number: sample.block_number,
                });
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn chain(&self) -> &ChainRef {
        &self.chain
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn points(&self) -> Vec<(u64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.timestamp, s.value))
            .collect()
    }

    pub fn summarize(&self) -> Result<SummaryStats, MetricsError> {
        summarize(&self.values())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub bucket_start: u64,
    pub mean: f64,
    pub count: usize,
}

/// Tumbling-bucket means over `(timestamp, value)` points in non-decreasing
/// timestamp order. Empty buckets are omitted.
pub fn downsample(points: &[(u64, f64)], bucket_s: u64) -> Vec<Bucket> {
    assert!(bucket_s > 0, "bucket width must be positive");
    struct Acc {
        start: u64,
        sum: f64,
        min: f64,
        max: f64,
        count: usize,
    }
    fn close(acc: Acc) -> Bucket {
        // the true mean lies in [min, max]; rounding in the sum may not
        let mean = (acc.sum / acc.count as f64).clamp(acc.min, acc.max);
        Bucket {
            bucket_start: acc.start,
            mean,
            count: acc.count,
        }
    }

    let mut out = Vec::new();
    let mut acc: Option<Acc> = None;
    for &(ts, value) in points {
        let start = ts - ts % bucket_s;
        match acc.as_mut() {
            Some(a) if a.start == start => {
                a.sum += value;
                a.min = a.min.min(value);
                a.max = a.max.max(value);
                a.count += 1;
            }
            _ => {
                if let Some(done) = acc.take() {
                    out.push(close(done));
                }
                acc = Some(Acc {
                    start,
                    sum: value,
                    min: value,
                    max: value,
                    count: 1,
                });
            }
        }
    }
    out.extend(acc.map(close));
    out
}
