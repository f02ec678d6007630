//! Shared domain types: chains, gas and fee quantities, network profiles,
//! block headers as reported and as normalized, metric samples and summaries.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub const WEI_PER_GWEI: u64 = 1_000_000_000;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Identifies a monitored network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainRef {
    pub name: String,
    pub chain_id: u64,
}

impl ChainRef {
    pub fn new(name: impl Into<String>, chain_id: u64) -> Self {
        Self {
            name: name.into(),
            chain_id,
        }
    }
}

impl fmt::Display for ChainRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name, self.chain_id)
    }
}

/// An amount of gas units.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct GasQuantity(pub u64);

impl GasQuantity {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// A per-gas price in wei. Gwei is only a display unit.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FeeQuantity(pub u64);

impl FeeQuantity {
    pub fn wei(self) -> u64 {
        self.0
    }

    pub fn from_gwei_units(gwei: u64) -> Self {
        Self(gwei * WEI_PER_GWEI)
    }

    /// Gwei as a float. Exact for wei values up to 2^53.
    pub fn gwei(self) -> f64 {
        let whole = (self.0 / WEI_PER_GWEI) as f64;
        let frac = (self.0 % WEI_PER_GWEI) as f64 / WEI_PER_GWEI as f64;
        whole + frac
    }

    /// Nearest wei to a gwei float; negative and non-finite inputs map to zero.
    pub fn from_gwei(gwei: f64) -> Self {
        if !gwei.is_finite() || gwei <= 0.0 {
            return Self(0);
        }
        let whole = gwei.trunc();
        let frac = ((gwei - whole) * WEI_PER_GWEI as f64).round() as u64;
        Self(
            (whole as u64)
                .saturating_mul(WEI_PER_GWEI)
                .saturating_add(frac),
        )
    }

    pub fn checked_add(self, other: FeeQuantity) -> Option<FeeQuantity> {
        self.0.checked_add(other.0).map(FeeQuantity)
    }
}

/// Exact decimal gwei, trailing zeros trimmed.
impl fmt::Display for FeeQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / WEI_PER_GWEI;
        let frac = self.0 % WEI_PER_GWEI;
        if frac == 0 {
            write!(f, "{whole} gwei")
        } else {
            let digits = format!("{frac:09}");
            write!(f, "{whole}.{} gwei", digits.trim_end_matches('0'))
        }
    }
}

/// How the reported block gas limit relates to the limit actually enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPolicy {
    /// The node reports the enforced limit.
    Reported,
    /// The node reports an inflated limit; this value is enforced instead.
    Override(GasQuantity),
}

/// Whether the priority fee contributes to the price a user effectively pays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityPolicy {
    Include,
    /// The chain refunds the priority fee; only the base fee is charged.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub chain: ChainRef,
    pub rpc_url: String,
    pub poll_interval_ms: u64,
    pub limit_policy: LimitPolicy,
    pub priority_policy: PriorityPolicy,
    pub constant_base_fee_expected: bool,
    pub base_fee_tolerance_wei: u64,
}

impl NetworkProfile {
    /// Reported limit, included priority fee, no constancy check.
    pub fn plain(chain: ChainRef, rpc_url: impl Into<String>) -> Self {
        Self {
            chain,
            rpc_url: rpc_url.into(),
            poll_interval_ms: 1_000,
            limit_policy: LimitPolicy::Reported,
            priority_policy: PriorityPolicy::Include,
            constant_base_fee_expected: false,
            base_fee_tolerance_wei: 0,
        }
    }
}

/// A profile that passed [`validate_profile`]. Downstream stages only accept this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedProfile(NetworkProfile);

impl ValidatedProfile {
    pub fn into_inner(self) -> NetworkProfile {
        self.0
    }
}

impl Deref for ValidatedProfile {
    type Target = NetworkProfile;

    fn deref(&self) -> &NetworkProfile {
        &self.0
    }
}

pub fn validate_profile(profile: NetworkProfile) -> Result<ValidatedProfile, ModelError> {
    let invalid = |reason: String| Err(ModelError::InvalidProfile(reason));

    let name = &profile.chain.name;
    if name.is_empty() {
        return invalid("chain name is empty".into());
    }
    if !name.is_ascii()
        || name
            .chars()
            .any(|c| c.is_ascii_whitespace() || c.is_ascii_control())
    {
        return invalid(format!(
            "chain name {name:?} must be printable ASCII without spaces"
        ));
    }
    if profile.chain.chain_id == 0 {
        return invalid(format!("{name}: chain_id must be positive"));
    }
    if profile.poll_interval_ms == 0 {
        return invalid(format!("{name}: poll_interval_ms must be positive"));
    }
    if let LimitPolicy::Override(limit) = profile.limit_policy {
        if limit.0 == 0 {
            return invalid(format!("{name}: override gas limit must be positive"));
        }
    }
    match url::Url::parse(&profile.rpc_url) {
        Ok(url) if matches!(url.scheme(), "http" | "https") && url.host().is_some() => {}
        Ok(url) => {
            return invalid(format!(
                "{name}: unsupported rpc_url scheme {:?}",
                url.scheme()
            ));
        }
        Err(e) => {
            return invalid(format!(
                "{name}: malformed rpc_url {:?}: {e}",
                profile.rpc_url
            ))
        }
    }
    Ok(ValidatedProfile(profile))
}

/// A block header as a node reports it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBlockHeader {
    pub chain: ChainRef,
    pub number: u64,
    /// Unix seconds.
    pub timestamp: u64,
    pub gas_used: GasQuantity,
    pub gas_limit: GasQuantity,
    pub base_fee_per_gas: FeeQuantity,
    /// Block-level priority fee estimate, absent when not sampled.
    pub priority_fee_observed: Option<FeeQuantity>,
}

impl RawBlockHeader {
    /// Checks the `gas_used <= gas_limit` invariant.
    pub fn check(&self) -> Result<(), String> {
        if self.gas_used > self.gas_limit {
            return Err(format!(
                "block {} of {}: gas used {} exceeds gas limit {}",
                self.number, self.chain.name, self.gas_used.0, self.gas_limit.0
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    LimitOverridden,
    PriorityExcluded,
    BaseFeeDeviation,
    UsageExceedsEffectiveLimit,
}

pub type Flags = BTreeSet<RecordFlag>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedBlockRecord {
    pub header: RawBlockHeader,
    pub effective_gas_limit: GasQuantity,
    pub effective_gas_price: FeeQuantity,
    pub flags: Flags,
}

impl NormalizedBlockRecord {
    pub fn has(&self, flag: RecordFlag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    GasPriceGwei,
    BlockUsageRatio,
}

impl MetricKind {
    pub const ALL: [MetricKind; 2] = [MetricKind::GasPriceGwei, MetricKind::BlockUsageRatio];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::GasPriceGwei => "gas_price_gwei",
            MetricKind::BlockUsageRatio => "block_usage_ratio",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub chain: ChainRef,
    pub block_number: u64,
    pub timestamp: u64,
    pub kind: MetricKind,
    pub value: f64,
}

/// Order statistics of a window or a whole series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn is_ordered(&self) -> bool {
        self.min <= self.q1
            && self.q1 <= self.median
            && self.median <= self.q3
            && self.q3 <= self.max
            && self.iqr >= 0.0
    }
}
