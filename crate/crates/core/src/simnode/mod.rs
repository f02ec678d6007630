//! Deterministic mock EVM node: seeded per-chain block scenarios and, with the
//! `net` feature, a JSON-RPC server that serves them.

mod rng;
#[cfg(feature = "net")]
mod server;

pub use rng::XorShift64Star;
#[cfg(feature = "net")]
pub use server::{encode_block, Clock, RunningNode};

use serde::{Deserialize, Serialize};

use crate::model::{
    ChainRef, FeeQuantity, GasQuantity, LimitPolicy, NetworkProfile, PriorityPolicy, RawBlockHeader,
};
use crate::records::{to_line, HeaderRecord};

pub const BPS: u64 = 10_000;
/// 2023-11-15T00:00:00Z; hour-aligned so time buckets line up with the first block.
pub const DEFAULT_GENESIS_TIMESTAMP: u64 = 1_700_006_400;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeRegime {
    ConstantBaseFee {
        base_fee_wei: u64,
    },
    /// Fee-market update toward a target share of the gas limit.
    AdaptiveBaseFee {
        initial_wei: u64,
        min_wei: u64,
        adjust_denominator: u64,
        /// Target usage in basis points of the limit (5000 = half full).
        target_ratio_bps: u64,
    },
}

impl FeeRegime {
    pub fn initial_base_fee(&self) -> u64 {
        match *self {
            FeeRegime::ConstantBaseFee { base_fee_wei } => base_fee_wei,
            FeeRegime::AdaptiveBaseFee {
                initial_wei,
                min_wei,
                ..
            } => initial_wei.max(min_wei),
        }
    }
}

/// Next block's base fee:
/// `max(min, round(current * (1 + (used / (target_ratio * limit) - 1) / denominator)))`,
/// evaluated in exact integer arithmetic with round-half-up. Saturates at `u64::MAX`.
pub fn next_base_fee(
    current_wei: u64,
    gas_used: GasQuantity,
    effective_limit: GasQuantity,
    regime: &FeeRegime,
) -> u64 {
    match *regime {
        FeeRegime::ConstantBaseFee { base_fee_wei } => base_fee_wei,
        FeeRegime::AdaptiveBaseFee {
            min_wei,
            adjust_denominator,
            target_ratio_bps,
            ..
        } => {
            assert!(effective_limit.0 > 0, "effective limit must be positive");
            assert!(adjust_denominator > 0 && target_ratio_bps > 0);
            // target gas = limit * bps / BPS; multiply through by BPS to stay integral
            let scaled_target = effective_limit.0 as u128 * target_ratio_bps as u128;
            let used = gas_used.0 as u128 * BPS as u128;
            let den = adjust_denominator as u128;
            let next = scaled_target
                .checked_mul(den - 1)
                .and_then(|t| t.checked_add(used))
                .and_then(|factor| factor.checked_mul(current_wei as u128))
                .and_then(|num| {
                    let d = scaled_target * den;
                    num.checked_mul(2)
                        .and_then(|n2| n2.checked_add(d))
                        .map(|n| n / (2 * d))
                })
                .map_or(u64::MAX, |v| u64::try_from(v).unwrap_or(u64::MAX));
            next.max(min_wei)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageModel {
    /// Mean usage in basis points of the enforced limit.
    pub mean_bps: u64,
    /// Half-width of the uniform jitter around the mean.
    pub jitter_bps: u64,
    /// Chance per block, in permille, of a spike block.
    #[serde(default)]
    pub spike_permille: u64,
    #[serde(default)]
    pub spike_bps: u64,
    /// Demand falls as the base fee rises above this anchor, and rises below it.
    #[serde(default)]
    pub demand_anchor_wei: Option<u64>,
    /// Usage shift in basis points per 100% deviation from the anchor.
    #[serde(default)]
    pub elasticity_bps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityModel {
    pub mean_wei: u64,
    pub jitter_wei: u64,
}

/// Parameters of a synthetic chain. Identical parameters give identical ledgers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub chain: ChainRef,
    pub seed: u64,
    pub block_count: u64,
    pub block_interval_s: u64,
    #[serde(default = "default_genesis")]
    pub genesis_timestamp: u64,
    /// Gas limit the node reports.
    pub reported_limit: GasQuantity,
    /// Gas limit actually enforced; defaults to the reported one.
    #[serde(default)]
    pub enforced_limit: Option<GasQuantity>,
    pub regime: FeeRegime,
    pub usage: UsageModel,
    /// Absent means the node exposes no priority-fee estimate.
    #[serde(default)]
    pub priority: Option<PriorityModel>,
    /// The chain refunds priority fees, so only the base fee is paid.
    #[serde(default)]
    pub priority_refunded: bool,
}

fn default_genesis() -> u64 {
    DEFAULT_GENESIS_TIMESTAMP
}

const GWEI: u64 = 1_000_000_000;

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn enforced_limit(&self) -> GasQuantity {
        self.enforced_limit.unwrap_or(self.reported_limit)
    }

    /// A monitoring profile matching how this chain reports: an override when
    /// the reported limit exceeds the enforced one, priority fees excluded
    /// when refunded.
    pub fn profile(&self, rpc_url: &str) -> NetworkProfile {
        let enforced = self.enforced_limit();
        NetworkProfile {
            limit_policy: if enforced < self.reported_limit {
                LimitPolicy::Override(enforced)
            } else {
                LimitPolicy::Reported
            },
            priority_policy: if self.priority_refunded {
                PriorityPolicy::Exclude
            } else {
                PriorityPolicy::Include
            },
            constant_base_fee_expected: matches!(self.regime, FeeRegime::ConstantBaseFee { .. }),
            ..NetworkProfile::plain(self.chain.clone(), rpc_url)
        }
    }

    /// Number of blocks covering `hours` at this scenario's block interval.
    pub fn with_hours(mut self, hours: u64) -> Self {
        self.block_count = (hours * 3600 / self.block_interval_s).max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_blocks(mut self, block_count: u64) -> Self {
        self.block_count = block_count;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| {
            Err(SimError::InvalidScenario(format!(
                "{}: {m}",
                self.chain.name
            )))
        };
        if self.chain.name.is_empty() || self.chain.chain_id == 0 {
            return bad("chain needs a name and a positive chain_id");
        }
        if self.block_count == 0 {
            return bad("block_count must be positive");
        }
        if self.block_interval_s == 0 {
            return bad("block_interval_s must be positive");
        }
        if self.reported_limit.0 == 0 {
            return bad("reported_limit must be positive");
        }
        if self.enforced_limit().0 == 0 || self.enforced_limit() > self.reported_limit {
            return bad("enforced_limit must be positive and at most reported_limit");
        }
        if self.usage.mean_bps > BPS
            || self.usage.spike_bps > BPS
            || self.usage.spike_permille > 1000
        {
            return bad(
                "usage ratios are basis points in [0, 10000], spikes permille in [0, 1000]",
            );
        }
        if let FeeRegime::AdaptiveBaseFee {
            adjust_denominator,
            target_ratio_bps,
            ..
        } = self.regime
        {
            if adjust_denominator == 0 || target_ratio_bps == 0 || target_ratio_bps > BPS {
                return bad(
                    "adaptive regime needs a positive denominator and target in (0, 10000]",
                );
            }
        }
        if self.usage.demand_anchor_wei == Some(0) {
            return bad("demand_anchor_wei must be positive");
        }
        self.genesis_timestamp
            .checked_add((self.block_count - 1).saturating_mul(self.block_interval_s))
            .map_or_else(|| bad("timestamps overflow"), |_| Ok(()))
    }

    /// Ethereum-like: 12 s blocks, adaptive base fee with elastic demand.
    pub fn ethereum_like(seed: u64) -> Self {
        Scenario {
            chain: ChainRef::new("ethereum", 1),
            seed,
            block_count: 3_600,
            block_interval_s: 12,
            genesis_timestamp: DEFAULT_GENESIS_TIMESTAMP,
            reported_limit: GasQuantity(30_000_000),
            enforced_limit: None,
            regime: FeeRegime::AdaptiveBaseFee {
                initial_wei: 1_600_000_000,
                min_wei: 7,
                adjust_denominator: 8,
                target_ratio_bps: 5_000,
            },
            usage: UsageModel {
                mean_bps: 5_000,
                jitter_bps: 4_500,
                spike_permille: 0,
                spike_bps: 0,
                demand_anchor_wei: Some(1_600_000_000),
                elasticity_bps: 2_000,
            },
            priority: Some(PriorityModel {
                mean_wei: 300_000_000,
                jitter_wei: 300_000_000,
            }),
            priority_refunded: false,
        }
    }

    /// Arbitrum-like: inflated reported limit, constant 0.01 gwei base fee,
    /// priority fee refunded, low usage with occasional spikes.
    pub fn arbitrum_like(seed: u64) -> Self {
        Scenario {
            chain: ChainRef::new("arbitrum", 42161),
            seed,
            block_count: 43_200,
            block_interval_s: 1,
            genesis_timestamp: DEFAULT_GENESIS_TIMESTAMP,
            reported_limit: GasQuantity(1 << 50),
            enforced_limit: Some(GasQuantity(32_000_000)),
            regime: FeeRegime::ConstantBaseFee {
                base_fee_wei: GWEI / 100,
            },
            usage: UsageModel {
                mean_bps: 200,
                jitter_bps: 150,
                spike_permille: 5,
                spike_bps: 6_000,
                demand_anchor_wei: None,
                elasticity_bps: 0,
            },
            priority: Some(PriorityModel {
                mean_wei: GWEI / 100,
                jitter_wei: GWEI / 100,
            }),
            priority_refunded: true,
        }
    }

    /// OP-Mainnet-like: 2 s blocks, slow-moving adaptive base fee near its floor.
    pub fn op_like(seed: u64) -> Self {
        Scenario {
            chain: ChainRef::new("op-mainnet", 10),
            seed,
            block_count: 21_600,
            block_interval_s: 2,
            genesis_timestamp: DEFAULT_GENESIS_TIMESTAMP,
            reported_limit: GasQuantity(30_000_000),
            enforced_limit: None,
            regime: FeeRegime::AdaptiveBaseFee {
                initial_wei: 5_000_000,
                min_wei: 1_000_000,
                adjust_denominator: 250,
                target_ratio_bps: 1_667,
            },
            usage: UsageModel {
                mean_bps: 1_600,
                jitter_bps: 1_200,
                spike_permille: 0,
                spike_bps: 0,
                demand_anchor_wei: Some(5_000_000),
                elasticity_bps: 1_000,
            },
            priority: Some(PriorityModel {
                mean_wei: 4_000_000,
                jitter_wei: 3_000_000,
            }),
            priority_refunded: false,
        }
    }

    /// Linea-like: constant 7 wei base fee, inflated reported limit, priority
    /// fee carries the price.
    pub fn linea_like(seed: u64) -> Self {
        Scenario {
            chain: ChainRef::new("linea", 59144),
            seed,
            block_count: 21_600,
            block_interval_s: 2,
            genesis_timestamp: DEFAULT_GENESIS_TIMESTAMP,
            reported_limit: GasQuantity(2_000_000_000),
            enforced_limit: Some(GasQuantity(30_000_000)),
            regime: FeeRegime::ConstantBaseFee { base_fee_wei: 7 },
            usage: UsageModel {
                mean_bps: 100,
                jitter_bps: 80,
                spike_permille: 0,
                spike_bps: 0,
                demand_anchor_wei: None,
                elasticity_bps: 0,
            },
            priority: Some(PriorityModel {
                mean_wei: 90_000_000,
                jitter_wei: 80_000_000,
            }),
            priority_refunded: false,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "ethereum" => Some(Self::ethereum_like(seed)),
            "arbitrum" => Some(Self::arbitrum_like(seed)),
            "op-mainnet" => Some(Self::op_like(seed)),
            "linea" => Some(Self::linea_like(seed)),
            _ => None,
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["ethereum", "arbitrum", "op-mainnet", "linea"];

fn usage_bps(model: &UsageModel, base_fee: u64, rng: &mut XorShift64Star) -> u64 {
    let mut bps = rng.jitter(model.mean_bps, model.jitter_bps) as i128;
    if let Some(anchor) = model.demand_anchor_wei {
        let deviation = anchor as i128 - base_fee as i128;
        bps += deviation * model.elasticity_bps as i128 / anchor as i128;
    }
    let mut bps = bps.clamp(0, BPS as i128) as u64;
    if model.spike_permille > 0 && rng.below(1000) < model.spike_permille {
        bps = model.spike_bps;
    }
    bps
}

/// Block numbers `0..block_count`, timestamps `genesis + n * interval`, base
/// fees following the regime against the enforced limit.
pub fn generate_scenario(scenario: &Scenario) -> Result<Vec<RawBlockHeader>, SimError> {
    scenario.validate()?;
    let mut rng = XorShift64Star::new(scenario.seed);
    let enforced = scenario.enforced_limit();
    let mut base_fee = scenario.regime.initial_base_fee();
    let mut ledger = Vec::with_capacity(scenario.block_count as usize);
    for number in 0..scenario.block_count {
        let bps = usage_bps(&scenario.usage, base_fee, &mut rng);
        let gas_used = GasQuantity((enforced.0 as u128 * bps as u128 / BPS as u128) as u64);
        let priority = scenario
            .priority
            .map(|p| FeeQuantity(rng.jitter(p.mean_wei, p.jitter_wei)));
        ledger.push(RawBlockHeader {
            chain: scenario.chain.clone(),
            number,
            timestamp: scenario.genesis_timestamp + number * scenario.block_interval_s,
            gas_used,
            gas_limit: scenario.reported_limit,
            base_fee_per_gas: FeeQuantity(base_fee),
            priority_fee_observed: priority,
        });
        base_fee = next_base_fee(base_fee, gas_used, enforced, &scenario.regime);
    }
    Ok(ledger)
}

/// A ledger as JSON lines of [`HeaderRecord`].
pub fn ledger_jsonl(ledger: &[RawBlockHeader]) -> Vec<u8> {
    ledger
        .iter()
        .flat_map(|h| to_line(&HeaderRecord::from(h)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADAPTIVE: FeeRegime = FeeRegime::AdaptiveBaseFee {
        initial_wei: 10 * GWEI,
        min_wei: 0,
        adjust_denominator: 8,
        target_ratio_bps: 5_000,
    };

    #[test]
    fn base_fee_fixed_point_at_target() {
        let next = next_base_fee(
            10 * GWEI,
            GasQuantity(15_000_000),
            GasQuantity(30_000_000),
            &ADAPTIVE,
        );
        assert_eq!(next, 10 * GWEI);
    }

    #[test]
    fn constant_regime_never_moves() {
        let regime = FeeRegime::ConstantBaseFee {
            base_fee_wei: 10_000_000,
        };
        for used in [0, 1, 15_000_000, 30_000_000] {
            assert_eq!(
                next_base_fee(123, GasQuantity(used), GasQuantity(30_000_000), &regime),
                10_000_000
            );
        }
    }

    #[test]
    fn base_fee_double_target() {
        // 10 gwei * (1 + (2 - 1) / 8) = 11.25 gwei
        let next = next_base_fee(
            10 * GWEI,
            GasQuantity(30_000_000),
            GasQuantity(30_000_000),
            &ADAPTIVE,
        );
        assert_eq!(next, 11_250_000_000);
        // empty block: 10 * (1 - 1/8) = 8.75 gwei
        let next = next_base_fee(
            10 * GWEI,
            GasQuantity(0),
            GasQuantity(30_000_000),
            &ADAPTIVE,
        );
        assert_eq!(next, 8_750_000_000);
    }

    #[test]
    fn base_fee_floor_and_rounding() {
        let regime = FeeRegime::AdaptiveBaseFee {
            initial_wei: 7,
            min_wei: 7,
            adjust_denominator: 8,
            target_ratio_bps: 5_000,
        };
        assert_eq!(
            next_base_fee(7, GasQuantity(0), GasQuantity(100), &regime),
            7
        );
        // 12 * 9/8 = 13.5 rounds half up to 14
        assert_eq!(
            next_base_fee(12, GasQuantity(100), GasQuantity(100), &regime),
            14
        );
        // 3 * 7/8 = 2.625 -> 3 by rounding, then floor at 7
        assert_eq!(
            next_base_fee(3, GasQuantity(0), GasQuantity(100), &regime),
            7
        );
    }

    #[test]
    fn base_fee_matches_float_formula() {
        let mut rng = XorShift64Star::new(99);
        for _ in 0..10_000 {
            let current = rng.below(200 * GWEI);
            let limit = 1 + rng.below(60_000_000);
            let used = rng.below(limit + 1);
            let den = 1 + rng.below(300);
            let bps = 1 + rng.below(BPS);
            let regime = FeeRegime::AdaptiveBaseFee {
                initial_wei: 0,
                min_wei: 0,
                adjust_denominator: den,
                target_ratio_bps: bps,
            };
            let exact =
                next_base_fee(current, GasQuantity(used), GasQuantity(limit), &regime) as f64;
            let target = bps as f64 / BPS as f64 * limit as f64;
            let float = current as f64 * (1.0 + (used as f64 / target - 1.0) / den as f64);
            assert!(
                (exact - float).abs() <= 0.5 + float.abs() * 1e-12,
                "{exact} vs {float}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = ledger_jsonl(&generate_scenario(&Scenario::ethereum_like(42)).unwrap());
        let b = ledger_jsonl(&generate_scenario(&Scenario::ethereum_like(42)).unwrap());
        assert_eq!(a, b);
        let c = ledger_jsonl(&generate_scenario(&Scenario::ethereum_like(43)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn constant_ledger_and_layout() {
        let s = Scenario::arbitrum_like(1).with_blocks(2_000);
        let ledger = generate_scenario(&s).unwrap();
        assert_eq!(ledger.len(), 2_000);
        for (n, h) in ledger.iter().enumerate() {
            assert_eq!(h.number, n as u64);
            assert_eq!(h.timestamp, DEFAULT_GENESIS_TIMESTAMP + n as u64);
            assert_eq!(h.base_fee_per_gas, FeeQuantity(10_000_000));
            assert!(h.gas_used <= s.enforced_limit() && h.gas_used <= h.gas_limit);
        }
    }

    #[test]
    fn sustained_high_usage_raises_base_fee() {
        let mut s = Scenario::ethereum_like(5).with_blocks(500);
        s.usage = UsageModel {
            mean_bps: 9_000,
            jitter_bps: 500,
            ..s.usage
        };
        s.usage.demand_anchor_wei = None;
        let ledger = generate_scenario(&s).unwrap();
        for pair in ledger.windows(2) {
            // usage stays in [85%, 95%] > 50% target, so the fee never falls
            assert!(pair[1].base_fee_per_gas >= pair[0].base_fee_per_gas);
        }
        assert!(ledger[499].base_fee_per_gas > ledger[0].base_fee_per_gas);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(generate_scenario(&Scenario::linea_like(1).with_blocks(0)).is_err());
        let mut s = Scenario::linea_like(1);
        s.block_interval_s = 0;
        assert!(matches!(
            generate_scenario(&s),
            Err(SimError::InvalidScenario(_))
        ));
        let mut s = Scenario::linea_like(1);
        s.enforced_limit = Some(GasQuantity(s.reported_limit.0 + 1));
        assert!(s.validate().is_err());
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESET_NAMES {
            let s = Scenario::preset(name, 7).unwrap();
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
        assert!(Scenario::preset("nope", 1).is_none());
        assert_eq!(Scenario::ethereum_like(1).with_hours(12).block_count, 3_600);
        assert_eq!(
            Scenario::arbitrum_like(1).with_hours(12).block_count,
            43_200
        );
    }

    #[test]
    fn preset_profiles_follow_reporting() {
        let arb = Scenario::arbitrum_like(1).profile("http://127.0.0.1:1");
        assert_eq!(
            arb.limit_policy,
            LimitPolicy::Override(GasQuantity(32_000_000))
        );
        assert_eq!(arb.priority_policy, PriorityPolicy::Exclude);
        assert!(arb.constant_base_fee_expected);
        let eth = Scenario::ethereum_like(1).profile("http://127.0.0.1:1");
        assert_eq!(
            (eth.limit_policy, eth.priority_policy),
            (LimitPolicy::Reported, PriorityPolicy::Include)
        );
        assert!(!eth.constant_base_fee_expected);
        for name in PRESET_NAMES {
            crate::model::validate_profile(
                Scenario::preset(name, 1)
                    .unwrap()
                    .profile("http://127.0.0.1:1"),
            )
            .unwrap();
        }
    }
}
