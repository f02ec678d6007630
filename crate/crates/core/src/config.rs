//! Run configuration (TOML).
//!
//! ```toml
//! output_dir = "out"
//! window_s = 300
//! downsample_bucket_s = 300
//!
//! [topics]
//! max_records = 100000
//!
//! [[networks]]
//! name = "arbitrum"
//! chain_id = 42161
//! rpc_url = "https://arb1.arbitrum.io/rpc"
//! poll_interval_ms = 250
//! limit_policy = { override = 32000000 }
//! priority_policy = "exclude"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::model::{
    validate_profile, ChainRef, LimitPolicy, ModelError, NetworkProfile, PriorityPolicy,
    ValidatedProfile,
};
use crate::streamlog::Retention;

pub const OUTPUT_DIR_ENV: &str = "STREAMMON_OUTPUT_DIR";
pub const DEFAULT_WINDOW_S: u64 = 300;
pub const DEFAULT_BUCKET_S: u64 = 300;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("network {network}: {source}")]
    InvalidProfile { network: String, source: ModelError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub profile: ValidatedProfile,
    /// First block to ingest; the current head when absent.
    pub start_block: Option<u64>,
    /// Ingest ends after this block.
    pub stop_after_block: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub networks: Vec<NetworkConfig>,
    pub retention: Retention,
    pub window_s: u64,
    pub downsample_bucket_s: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn network(&self, name: &str) -> Option<&NetworkConfig> {
        self.networks.iter().find(|n| n.profile.chain.name == name)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    window_s: Option<u64>,
    #[serde(default)]
    downsample_bucket_s: Option<u64>,
    #[serde(default)]
    topics: Option<RawTopics>,
    #[serde(default)]
    networks: Vec<RawNetwork>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopics {
    max_records: Option<usize>,
    max_age_s: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    name: Option<String>,
    chain_id: Option<u64>,
    rpc_url: Option<String>,
    poll_interval_ms: Option<u64>,
    limit_policy: Option<LimitPolicy>,
    priority_policy: Option<PriorityPolicy>,
    #[serde(default)]
    constant_base_fee_expected: bool,
    #[serde(default)]
    base_fee_tolerance_wei: u64,
    start_block: Option<u64>,
    stop_after_block: Option<u64>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))?;
    if raw.networks.is_empty() {
        return Err(ConfigError::Parse(
            "at least one [[networks]] entry is required".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    let mut networks = Vec::with_capacity(raw.networks.len());
    for (i, n) in raw.networks.into_iter().enumerate() {
        let label = n.name.clone().unwrap_or_else(|| format!("#{}", i + 1));
        let missing = |field: &str| ConfigError::Parse(format!("network {label}: missing {field}"));
        let name = n.name.clone().ok_or_else(|| missing("name"))?;
        if !seen.insert(name.clone()) {
            return Err(ConfigError::Parse(format!(
                "duplicate network name {name:?}"
            )));
        }
        let profile = NetworkProfile {
            chain: ChainRef::new(name, n.chain_id.ok_or_else(|| missing("chain_id"))?),
            rpc_url: n.rpc_url.ok_or_else(|| missing("rpc_url"))?,
            poll_interval_ms: n.poll_interval_ms.unwrap_or(1_000),
            limit_policy: n.limit_policy.unwrap_or(LimitPolicy::Reported),
            priority_policy: n.priority_policy.unwrap_or(PriorityPolicy::Include),
            constant_base_fee_expected: n.constant_base_fee_expected,
            base_fee_tolerance_wei: n.base_fee_tolerance_wei,
        };
        let profile = validate_profile(profile).map_err(|source| ConfigError::InvalidProfile {
            network: label.clone(),
            source,
        })?;
        if let (Some(start), Some(stop)) = (n.start_block, n.stop_after_block) {
            if stop < start {
                return Err(ConfigError::Parse(format!(
                    "network {label}: stop_after_block precedes start_block"
                )));
            }
        }
        networks.push(NetworkConfig {
            profile,
            start_block: n.start_block,
            stop_after_block: n.stop_after_block,
        });
    }

    let retention = match raw.topics {
        None => Retention::default(),
        Some(RawTopics {
            max_records: None,
            max_age_s: None,
        }) => Retention::default(),
        Some(t) => Retention {
            max_records: t.max_records,
            max_age_s: t.max_age_s,
        },
    };
    if retention.max_records == Some(0) || retention.max_age_s == Some(0) {
        return Err(ConfigError::Parse(
            "topic retention bounds must be positive".into(),
        ));
    }
    let positive = |v: Option<u64>, default: u64, field: &str| match v {
        Some(0) => Err(ConfigError::Parse(format!("{field} must be positive"))),
        Some(v) => Ok(v),
        None => Ok(default),
    };
    Ok(RunConfig {
        networks,
        retention,
        window_s: positive(raw.window_s, DEFAULT_WINDOW_S, "window_s")?,
        downsample_bucket_s: positive(
            raw.downsample_bucket_s,
            DEFAULT_BUCKET_S,
            "downsample_bucket_s",
        )?,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

/// Reads and validates a config file; `STREAMMON_OUTPUT_DIR` overrides `output_dir`.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        config.output_dir = PathBuf::from(dir);
    }
    Ok(config)
}
