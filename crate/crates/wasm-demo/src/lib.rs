//! Browser demo over the `streammon` core.
//!
//! Every export returns a JSON string (or an error message) so the same
//! functions are exercised natively by the tests and from JavaScript.

use std::collections::BTreeMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use streammon::metrics::{block_usage_sample, downsample, gas_price_sample, summarize, Bucket};
use streammon::model::{validate_profile, GasQuantity, MetricKind, RecordFlag, SummaryStats};
use streammon::normalize::Normalizer;
use streammon::plot::{render_svg, ChartOptions, SeriesRef, YScale};
use streammon::simnode::{
    generate_scenario, next_base_fee, FeeRegime, Scenario, BPS, PRESET_NAMES,
};

pub const MAX_HOURS: u32 = 24;
pub const MAX_CURVE_BLOCKS: u32 = 10_000;
const WEI_PER_GWEI: f64 = 1e9;

#[derive(Debug, Serialize)]
pub struct ChainRow {
    pub chain: String,
    pub blocks: usize,
    pub gas_price: SummaryStats,
    pub block_ratio: SummaryStats,
    pub flags: BTreeMap<RecordFlag, u64>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub seed: u32,
    pub hours: u32,
    pub bucket_s: u32,
    pub rows: Vec<ChainRow>,
    pub gas_price_svg: String,
    pub block_ratio_svg: String,
}

struct Simulated {
    row: ChainRow,
    gas: Vec<Bucket>,
    ratio: Vec<Bucket>,
}

fn simulate(name: &str, seed: u64, hours: u64, bucket_s: u64) -> Result<Simulated, String> {
    let scenario = Scenario::preset(name, seed)
        .ok_or_else(|| format!("unknown preset {name}"))?
        .with_hours(hours);
    let ledger = generate_scenario(&scenario).map_err(|e| e.to_string())?;
    let profile =
        validate_profile(scenario.profile("http://localhost")).map_err(|e| e.to_string())?;
    let mut normalizer = Normalizer::new(profile);
    let mut gas = Vec::with_capacity(ledger.len());
    let mut ratio = Vec::with_capacity(ledger.len());
    let mut flags = BTreeMap::new();
    for header in ledger {
        let record = normalizer
            .normalize_header(header)
            .map_err(|e| e.to_string())?;
        for f in &record.flags {
            *flags.entry(*f).or_default() += 1;
        }
        let g = gas_price_sample(&record);
        let r = block_usage_sample(&record).map_err(|e| e.to_string())?;
        gas.push((g.timestamp, g.value));
        ratio.push((r.timestamp, r.value));
    }
    let values = |points: &[(u64, f64)]| points.iter().map(|p| p.1).collect::<Vec<_>>();
    let row = ChainRow {
        chain: name.to_owned(),
        blocks: gas.len(),
        gas_price: summarize(&values(&gas)).map_err(|e| e.to_string())?,
        block_ratio: summarize(&values(&ratio)).map_err(|e| e.to_string())?,
        flags,
    };
    Ok(Simulated {
        row,
        gas: downsample(&gas, bucket_s),
        ratio: downsample(&ratio, bucket_s),
    })
}

/// Simulates every preset chain for `hours` and returns whole-run
/// statistics plus downsampled overview charts of both metrics.
#[wasm_bindgen]
pub fn compare_presets(seed: u32, hours: u32, bucket_s: u32) -> Result<String, String> {
    if !(1..=MAX_HOURS).contains(&hours) {
        return Err(format!("hours must be between 1 and {MAX_HOURS}"));
    }
    if bucket_s == 0 {
        return Err("bucket width must be positive".into());
    }
    let sims = PRESET_NAMES
        .iter()
        .map(|name| simulate(name, seed.into(), hours.into(), bucket_s.into()))
        .collect::<Result<Vec<_>, _>>()?;
    let chart = |kind: MetricKind, scale: YScale, pick: fn(&Simulated) -> &[Bucket]| {
        let series: Vec<SeriesRef<'_>> = sims
            .iter()
            .map(|s| SeriesRef {
                label: &s.row.chain,
                buckets: pick(s),
            })
            .collect();
        render_svg(
            &series,
            &ChartOptions {
                title: format!("{kind}, {bucket_s} s means"),
                y_label: kind.to_string(),
                y_scale: scale,
            },
        )
    };
    let gas_price_svg = chart(MetricKind::GasPriceGwei, YScale::Log10, |s| &s.gas);
    let block_ratio_svg = chart(MetricKind::BlockUsageRatio, YScale::Linear, |s| &s.ratio);
    let out = Comparison {
        seed,
        hours,
        bucket_s,
        rows: sims.into_iter().map(|s| s.row).collect(),
        gas_price_svg,
        block_ratio_svg,
    };
    Ok(serde_json::to_string(&out).expect("comparison serializes"))
}

/// Median, quartiles and IQR of numbers separated by whitespace, commas or semicolons.
#[wasm_bindgen]
pub fn summarize_values(text: &str) -> Result<String, String> {
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = summarize(&values).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&stats).expect("stats serialize"))
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub base_fee_gwei: Vec<f64>,
    pub svg: String,
}

/// Base fee per block under the adaptive rule for a repeating usage pattern
/// (percent of a 30M gas limit), starting from `initial_gwei`.
#[wasm_bindgen]
pub fn base_fee_curve(
    initial_gwei: f64,
    min_gwei: f64,
    denominator: u32,
    target_pct: f64,
    usage_pattern: &str,
    blocks: u32,
) -> Result<String, String> {
    const LIMIT: u64 = 30_000_000;
    const INTERVAL_S: u64 = 12;
    let wei = |gwei: f64, what: &str| {
        if gwei.is_finite() && gwei > 0.0 && gwei * WEI_PER_GWEI < u64::MAX as f64 {
            Ok((gwei * WEI_PER_GWEI).round() as u64)
        } else {
            Err(format!("{what} must be a positive gwei amount"))
        }
    };
    let pct_to_bps = |pct: f64| -> Result<u64, String> {
        if (0.0..=100.0).contains(&pct) {
            Ok((pct / 100.0 * BPS as f64).round() as u64)
        } else {
            Err(format!("percentages must lie in [0, 100], got {pct}"))
        }
    };
    if !(1..=MAX_CURVE_BLOCKS).contains(&blocks) {
        return Err(format!("blocks must be between 1 and {MAX_CURVE_BLOCKS}"));
    }
    if denominator == 0 {
        return Err("denominator must be positive".into());
    }
    let target = pct_to_bps(target_pct)?;
    if target == 0 {
        return Err("target must be above 0%".into());
    }
    let pattern = usage_pattern
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("not a number: {t:?}"))
                .and_then(pct_to_bps)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pattern.is_empty() {
        return Err("usage pattern is empty".into());
    }
    let regime = FeeRegime::AdaptiveBaseFee {
        initial_wei: wei(initial_gwei, "initial base fee")?,
        min_wei: wei(min_gwei, "minimum base fee")?,
        adjust_denominator: denominator.into(),
        target_ratio_bps: target,
    };
    let mut fee = regime.initial_base_fee();
    let mut gwei = Vec::with_capacity(blocks as usize);
    let mut points = Vec::with_capacity(blocks as usize);
    for i in 0..u64::from(blocks) {
        gwei.push(fee as f64 / WEI_PER_GWEI);
        points.push((i * INTERVAL_S, fee as f64 / WEI_PER_GWEI));
        let used = GasQuantity(LIMIT * pattern[i as usize % pattern.len()] / BPS);
        fee = next_base_fee(fee, used, GasQuantity(LIMIT), &regime);
    }
    let svg = render_svg(
        &[SeriesRef {
            label: "base fee",
            buckets: &downsample(&points, INTERVAL_S),
        }],
        &ChartOptions {
            title: "adaptive base fee".into(),
            y_label: "gwei".into(),
            y_scale: YScale::Linear,
        },
    );
    Ok(serde_json::to_string(&Curve {
        base_fee_gwei: gwei,
        svg,
    })
    .expect("curve serializes"))
}
