//! Block header acquisition over an EVM node's JSON-RPC service.
//!
//! [`poll_chain`] emits every block exactly once in ascending order: repeated
//! heads are ignored, head jumps are backfilled, head regressions are logged
//! and skipped, and transport failures back off exponentially.

use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::model::{ChainRef, FeeQuantity, GasQuantity, RawBlockHeader, ValidatedProfile};

pub const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed quantity {0:?}")]
    MalformedQuantity(String),
    #[error("rpc unavailable: {0}")]
    RpcUnavailable(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("block {0} not found")]
    BlockNotFound(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

impl IngestError {
    /// Failures worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            IngestError::RpcUnavailable(_)
                | IngestError::Rpc { .. }
                | IngestError::BlockNotFound(_)
        )
    }
}

/// Decodes a `0x`-prefixed hexadecimal quantity.
pub fn parse_quantity(text: &str) -> Result<u64, IngestError> {
    let malformed = || IngestError::MalformedQuantity(text.to_owned());
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .ok_or_else(malformed)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed());
    }
    u64::from_str_radix(digits, 16).map_err(|_| malformed())
}

pub fn encode_quantity(value: u64) -> String {
    format!("{value:#x}")
}

/// The header fields of an `eth_getBlockByNumber` result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RpcBlock {
    pub number: String,
    pub timestamp: String,
    pub gas_used: String,
    pub gas_limit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_fee_per_gas: Option<String>,
}

pub fn decode_block(chain: &ChainRef, block: &RpcBlock) -> Result<RawBlockHeader, IngestError> {
    let field = |name: &str, value: &str| {
        parse_quantity(value).map_err(|e| IngestError::InvalidHeader(format!("{name}: {e}")))
    };
    let base_fee = block
        .base_fee_per_gas
        .as_deref()
        .ok_or_else(|| IngestError::InvalidHeader("baseFeePerGas missing".into()))?;
    let header = RawBlockHeader {
        chain: chain.clone(),
        number: field("number", &block.number)?,
        timestamp: field("timestamp", &block.timestamp)?,
        gas_used: GasQuantity(field("gasUsed", &block.gas_used)?),
        gas_limit: GasQuantity(field("gasLimit", &block.gas_limit)?),
        base_fee_per_gas: FeeQuantity(field("baseFeePerGas", base_fee)?),
        priority_fee_observed: None,
    };
    header.check().map_err(IngestError::InvalidHeader)?;
    Ok(header)
}

/// Something that can report a chain head and serve headers by number.
pub trait BlockSource {
    fn block_number(&self) -> Result<u64, IngestError>;
    fn fetch_block(&self, number: u64) -> Result<RawBlockHeader, IngestError>;
}

impl<S: BlockSource + ?Sized> BlockSource for &S {
    fn block_number(&self) -> Result<u64, IngestError> {
        (**self).block_number()
    }
    fn fetch_block(&self, number: u64) -> Result<RawBlockHeader, IngestError> {
        (**self).fetch_block(number)
    }
}

#[cfg(feature = "net")]
pub use client::RpcClient;

#[cfg(feature = "net")]
mod client {
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{decode_block, parse_quantity, BlockSource, IngestError, RpcBlock};
    use crate::model::{ChainRef, FeeQuantity, RawBlockHeader};

    /// Blocking JSON-RPC 2.0 client over HTTP POST.
    ///
    /// The block-level priority fee is the 50th-percentile reward reported by
    /// `eth_feeHistory` for that block; nodes without it yield `None`.
    pub struct RpcClient {
        agent: ureq::Agent,
        url: String,
        chain: ChainRef,
        next_id: AtomicU64,
    }

    impl RpcClient {
        pub fn new(url: impl Into<String>, chain: ChainRef) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(10)))
                .http_status_as_error(true)
                .build()
                .into();
            Self {
                agent,
                url: url.into(),
                chain,
                next_id: AtomicU64::new(1),
            }
        }

        pub fn call(&self, method: &str, params: Value) -> Result<Value, IngestError> {
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            let request = json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params });
            let mut response = self
                .agent
                .post(&self.url)
                .send_json(&request)
                .map_err(|e| IngestError::RpcUnavailable(format!("{method}: {e}")))?;
            let mut body: Value = response.body_mut().read_json().map_err(|e| {
                IngestError::RpcUnavailable(format!("{method}: unreadable response: {e}"))
            })?;
            if let Some(err) = body.get("error") {
                return Err(IngestError::Rpc {
                    code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                    message: err
                        .get("message")
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .to_owned(),
                });
            }
            match body.get_mut("result") {
                Some(result) => Ok(result.take()),
                None => Err(IngestError::RpcUnavailable(format!(
                    "{method}: response without result"
                ))),
            }
        }

        fn priority_fee(&self, number: u64) -> Result<Option<FeeQuantity>, IngestError> {
            let history = match self.call(
                "eth_feeHistory",
                json!(["0x1", super::encode_quantity(number), [50.0]]),
            ) {
                Ok(v) => v,
                Err(IngestError::Rpc { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let reward = history
                .get("reward")
                .and_then(|r| r.get(0))
                .and_then(|r| r.get(0))
                .and_then(Value::as_str);
            reward
                .map(|r| parse_quantity(r).map(FeeQuantity))
                .transpose()
                .map_err(|e| IngestError::InvalidHeader(format!("feeHistory reward: {e}")))
        }
    }

    impl BlockSource for RpcClient {
        fn block_number(&self) -> Result<u64, IngestError> {
            let head = self.call("eth_blockNumber", json!([]))?;
            let text = head
                .as_str()
                .ok_or_else(|| IngestError::MalformedQuantity(head.to_string()))?;
            parse_quantity(text)
        }

        fn fetch_block(&self, number: u64) -> Result<RawBlockHeader, IngestError> {
            let result = self.call(
                "eth_getBlockByNumber",
                json!([super::encode_quantity(number), false]),
            )?;
            if result.is_null() {
                return Err(IngestError::BlockNotFound(number));
            }
            let block: RpcBlock = serde_json::from_value(result)
                .map_err(|e| IngestError::InvalidHeader(e.to_string()))?;
            let mut header = decode_block(&self.chain, &block)?;
            if header.number != number {
                return Err(IngestError::InvalidHeader(format!(
                    "asked for block {number}, got {}",
                    header.number
                )));
            }
            header.priority_fee_observed = self.priority_fee(number)?;
            Ok(header)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestCursor {
    pub chain: ChainRef,
    pub last_emitted: Option<u64>,
}

impl IngestCursor {
    pub fn new(chain: ChainRef) -> Self {
        Self {
            chain,
            last_emitted: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartAt {
    /// The head observed on the first successful poll.
    Head,
    Block(u64),
}

#[derive(Debug, Clone)]
pub struct PollOptions {
    pub start: StartAt,
    /// Finish after emitting this block.
    pub stop_after: Option<u64>,
    pub max_backoff: Duration,
    /// Attempts at a block that keeps failing validation before the chain halts.
    pub invalid_header_attempts: u32,
}

impl Default for PollOptions {
    fn default() -> Self {
        Self {
            start: StartAt::Head,
            stop_after: None,
            max_backoff: MAX_BACKOFF,
            invalid_header_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PollOutcome {
    Stopped,
    /// Reached `stop_after`.
    Completed,
    /// The sink refused an emission.
    SinkClosed,
    /// A block kept failing validation; ingest for this chain stopped.
    Halted(IngestError),
}

/// Cooperative stop flag whose sleeps wake early on stop.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<(Mutex<bool>, Condvar)>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        *self.0 .0.lock() = true;
        self.0 .1.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.0 .0.lock()
    }

    /// Sleeps up to `d`; returns true if stopped.
    pub fn sleep(&self, d: Duration) -> bool {
        let mut stopped = self.0 .0.lock();
        if !*stopped {
            self.0 .1.wait_for(&mut stopped, d);
        }
        *stopped
    }
}

/// `min(base * 2^failures, cap)`.
pub fn backoff_delay(base: Duration, failures: u32, cap: Duration) -> Duration {
    base.checked_mul(1u32.checked_shl(failures.min(31)).unwrap_or(u32::MAX))
        .unwrap_or(cap)
        .min(cap)
}

/// Follows the chain head and emits headers in order until stopped, until
/// `stop_after` is emitted, or until a block keeps failing validation.
pub fn poll_chain<S, E>(
    source: &S,
    profile: &ValidatedProfile,
    cursor: &mut IngestCursor,
    mut emit: E,
    options: &PollOptions,
    stop: &StopSignal,
) -> PollOutcome
where
    S: BlockSource + ?Sized,
    E: FnMut(RawBlockHeader) -> Result<(), ()>,
{
    let interval = Duration::from_millis(profile.poll_interval_ms);
    let chain = &profile.chain.name;
    let mut failures = 0u32;
    let back_off = |failures: &mut u32, err: &IngestError| {
        let delay = backoff_delay(interval, *failures, options.max_backoff);
        *failures += 1;
        tracing::warn!(chain = %chain, error = %err, ?delay, "rpc failure, backing off");
        stop.sleep(delay)
    };

    loop {
        if stop.is_stopped() {
            return PollOutcome::Stopped;
        }
        if let (Some(end), Some(last)) = (options.stop_after, cursor.last_emitted) {
            if last >= end {
                return PollOutcome::Completed;
            }
        }

        let head = match source.block_number() {
            Ok(head) => {
                failures = 0;
                head
            }
            Err(e) => {
                if back_off(&mut failures, &e) {
                    return PollOutcome::Stopped;
                }
                continue;
            }
        };

        let next = match (cursor.last_emitted, options.start) {
            (Some(last), _) => last + 1,
            (None, StartAt::Head) => head,
            (None, StartAt::Block(b)) => b,
        };
        if head < next {
            if let Some(last) = cursor.last_emitted.filter(|&last| head < last) {
                tracing::warn!(chain = %chain, head, last, "head regressed; ignoring");
            }
            if stop.sleep(interval) {
                return PollOutcome::Stopped;
            }
            continue;
        }

        let upto = options.stop_after.map_or(head, |end| head.min(end));
        for number in next..=upto {
            let mut invalid = 0u32;
            let header = loop {
                if stop.is_stopped() {
                    return PollOutcome::Stopped;
                }
                match source.fetch_block(number) {
                    Ok(h) if h.number == number && h.chain == profile.chain => {
                        failures = 0;
                        break h;
                    }
                    Ok(h) => {
                        let e = IngestError::InvalidHeader(format!(
                            "requested {} block {number}, got {} block {}",
                            profile.chain, h.chain, h.number
                        ));
                        tracing::error!(chain = %chain, error = %e, "halting ingest");
                        return PollOutcome::Halted(e);
                    }
                    Err(e) if e.is_transient() => {
                        if back_off(&mut failures, &e) {
                            return PollOutcome::Stopped;
                        }
                    }
                    Err(e) => {
                        invalid += 1;
                        if invalid >= options.invalid_header_attempts.max(1) {
                            tracing::error!(chain = %chain, block = number, error = %e, "halting ingest");
                            return PollOutcome::Halted(e);
                        }
                        if back_off(&mut failures, &e) {
                            return PollOutcome::Stopped;
                        }
                    }
                }
            };
            if emit(header).is_err() {
                return PollOutcome::SinkClosed;
            }
            cursor.last_emitted = Some(number);
        }
        if options.stop_after.is_some_and(|end| upto >= end) {
            return PollOutcome::Completed;
        }
        if stop.sleep(interval) {
            return PollOutcome::Stopped;
        }
    }
}
