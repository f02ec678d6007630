//! JSON-lines record schemas used for topics, replay input and output files.
//!
//! Field names are fixed: `chain, number, ts, gas_used, gas_limit,
//! base_fee_wei, priority_fee_wei, eff_limit, eff_price_wei, flags, kind, value`.

use serde::{Deserialize, Serialize};

use crate::model::{
    ChainRef, FeeQuantity, GasQuantity, MetricKind, MetricSample, NormalizedBlockRecord,
    RawBlockHeader, RecordFlag, SummaryStats,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderRecord {
    pub chain: String,
    pub number: u64,
    pub ts: u64,
    pub gas_used: u64,
    pub gas_limit: u64,
    pub base_fee_wei: u64,
    #[serde(default)]
    pub priority_fee_wei: Option<u64>,
}

impl From<&RawBlockHeader> for HeaderRecord {
    fn from(h: &RawBlockHeader) -> Self {
        Self {
            chain: h.chain.name.clone(),
            number: h.number,
            ts: h.timestamp,
            gas_used: h.gas_used.0,
            gas_limit: h.gas_limit.0,
            base_fee_wei: h.base_fee_per_gas.0,
            priority_fee_wei: h.priority_fee_observed.map(|p| p.0),
        }
    }
}

impl HeaderRecord {
    /// Rebuilds the header; the record only carries the chain name.
    pub fn to_header(&self, chain: ChainRef) -> RawBlockHeader {
        RawBlockHeader {
            chain,
            number: self.number,
            timestamp: self.ts,
            gas_used: GasQuantity(self.gas_used),
            gas_limit: GasQuantity(self.gas_limit),
            base_fee_per_gas: FeeQuantity(self.base_fee_wei),
            priority_fee_observed: self.priority_fee_wei.map(FeeQuantity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedRecord {
    pub chain: String,
    pub number: u64,
    pub ts: u64,
    pub gas_used: u64,
    pub gas_limit: u64,
    pub base_fee_wei: u64,
    pub priority_fee_wei: Option<u64>,
    pub eff_limit: u64,
    pub eff_price_wei: u64,
    pub flags: Vec<RecordFlag>,
}

impl From<&NormalizedBlockRecord> for NormalizedRecord {
    fn from(r: &NormalizedBlockRecord) -> Self {
        let h = HeaderRecord::from(&r.header);
        Self {
            chain: h.chain,
            number: h.number,
            ts: h.ts,
            gas_used: h.gas_used,
            gas_limit: h.gas_limit,
            base_fee_wei: h.base_fee_wei,
            priority_fee_wei: h.priority_fee_wei,
            eff_limit: r.effective_gas_limit.0,
            eff_price_wei: r.effective_gas_price.0,
            flags: r.flags.iter().copied().collect(),
        }
    }
}

impl NormalizedRecord {
    pub fn to_record(&self, chain: ChainRef) -> NormalizedBlockRecord {
        NormalizedBlockRecord {
            header: RawBlockHeader {
                chain,
                number: self.number,
                timestamp: self.ts,
                gas_used: GasQuantity(self.gas_used),
                gas_limit: GasQuantity(self.gas_limit),
                base_fee_per_gas: FeeQuantity(self.base_fee_wei),
                priority_fee_observed: self.priority_fee_wei.map(FeeQuantity),
            },
            effective_gas_limit: GasQuantity(self.eff_limit),
            effective_gas_price: FeeQuantity(self.eff_price_wei),
            flags: self.flags.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub chain: String,
    pub number: u64,
    pub ts: u64,
    pub kind: MetricKind,
    pub value: f64,
}

impl From<&MetricSample> for MetricRecord {
    fn from(s: &MetricSample) -> Self {
        Self {
            chain: s.chain.name.clone(),
            number: s.block_number,
            ts: s.timestamp,
            kind: s.kind,
            value: s.value,
        }
    }
}

/// Statistics of one metric over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub chain: String,
    pub kind: MetricKind,
    pub window_start: u64,
    pub window_end: u64,
    pub partial: bool,
    pub stats: SummaryStats,
}

/// Serializes one value as a JSON line, newline included.
pub fn to_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("record types serialize infallibly");
    line.push(b'\n');
    line
}
