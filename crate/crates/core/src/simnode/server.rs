use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::ingest::{encode_quantity, parse_quantity};
use crate::model::RawBlockHeader;

/// Scenario time as seen by the node; blocks with `timestamp <= now` exist.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Set explicitly by the test or operator.
    Virtual(Arc<AtomicU64>),
    /// Wall time since start, scaled by `speed`, offset to `at_start`.
    Real {
        started: Instant,
        at_start: u64,
        speed: u64,
    },
}

impl Clock {
    pub fn fixed(now: u64) -> Self {
        Clock::Virtual(Arc::new(AtomicU64::new(now)))
    }

    pub fn real(at_start: u64, speed: u64) -> Self {
        Clock::Real {
            started: Instant::now(),
            at_start,
            speed: speed.max(1),
        }
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::Virtual(t) => t.load(Ordering::SeqCst),
            Clock::Real {
                started,
                at_start,
                speed,
            } => at_start + started.elapsed().as_secs() * speed,
        }
    }
}

struct NodeState {
    ledger: Vec<RawBlockHeader>,
    clock: Clock,
    fail_next: AtomicU32,
    down: AtomicBool,
    requests: AtomicU64,
}

impl NodeState {
    fn first(&self) -> u64 {
        self.ledger.first().map_or(0, |h| h.number)
    }

    fn head(&self) -> Option<u64> {
        let now = self.clock.now();
        let visible = self.ledger.partition_point(|h| h.timestamp <= now);
        // the first block is always visible
        self.ledger.get(visible.saturating_sub(1)).map(|h| h.number)
    }

    fn block(&self, number: u64) -> Option<&RawBlockHeader> {
        let head = self.head()?;
        if number > head {
            return None;
        }
        number
            .checked_sub(self.first())
            .and_then(|i| self.ledger.get(i as usize))
    }
}

/// The `eth_getBlockByNumber` header object for a block.
pub fn encode_block(h: &RawBlockHeader) -> Value {
    json!({
        "number": encode_quantity(h.number),
        "timestamp": encode_quantity(h.timestamp),
        "gasUsed": encode_quantity(h.gas_used.0),
        "gasLimit": encode_quantity(h.gas_limit.0),
        "baseFeePerGas": encode_quantity(h.base_fee_per_gas.0),
        "transactions": [],
    })
}

fn rpc_error(id: Value, code: i64, message: &str) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message } })
}

fn block_param(state: &NodeState, param: Option<&Value>) -> Result<Option<u64>, String> {
    match param.and_then(Value::as_str) {
        Some("latest" | "pending" | "safe" | "finalized") => Ok(state.head()),
        Some("earliest") => Ok(Some(state.first())),
        Some(hex) => parse_quantity(hex).map(Some).map_err(|e| e.to_string()),
        None => match param.and_then(Value::as_u64) {
            Some(n) => Ok(Some(n)),
            None => Err("expected a block number or tag".into()),
        },
    }
}

fn fee_history(state: &NodeState, params: &[Value]) -> Result<Value, String> {
    let count = match params.first() {
        Some(Value::String(s)) => parse_quantity(s).map_err(|e| e.to_string())?,
        Some(v) => v.as_u64().ok_or("blockCount must be a quantity")?,
        None => return Err("missing blockCount".into()),
    }
    .min(1024);
    let newest = block_param(state, params.get(1))?.ok_or("no blocks")?;
    let percentiles = params.get(2).and_then(Value::as_array).map_or(0, Vec::len);
    let newest = newest.min(state.head().ok_or("no blocks")?);
    let oldest = newest
        .saturating_sub(count.saturating_sub(1))
        .max(state.first());
    let blocks: Vec<&RawBlockHeader> = (oldest..=newest).filter_map(|n| state.block(n)).collect();
    if count == 0 || blocks.is_empty() {
        return Ok(
            json!({ "oldestBlock": encode_quantity(oldest), "baseFeePerGas": [], "gasUsedRatio": [] }),
        );
    }
    let mut base_fees: Vec<String> = blocks
        .iter()
        .map(|h| encode_quantity(h.base_fee_per_gas.0))
        .collect();
    // base fee of the block after `newest`, repeated when it is not in the ledger
    let following = newest
        .checked_sub(state.first())
        .and_then(|i| state.ledger.get(i as usize + 1))
        .unwrap_or(blocks[blocks.len() - 1]);
    base_fees.push(encode_quantity(following.base_fee_per_gas.0));
    let ratios: Vec<f64> = blocks
        .iter()
        .map(|h| h.gas_used.0 as f64 / h.gas_limit.0.max(1) as f64)
        .collect();
    let mut out = json!({
        "oldestBlock": encode_quantity(oldest),
        "baseFeePerGas": base_fees,
        "gasUsedRatio": ratios,
    });
    if percentiles > 0 && blocks.iter().all(|h| h.priority_fee_observed.is_some()) {
        let rewards: Vec<Vec<String>> = blocks
            .iter()
            .map(|h| {
                vec![encode_quantity(h.priority_fee_observed.unwrap_or_default().0); percentiles]
            })
            .collect();
        out["reward"] = json!(rewards);
    }
    Ok(out)
}

fn dispatch(state: &NodeState, request: &Value) -> Value {
    let id = request.get("id").cloned().unwrap_or(Value::Null);
    let Some(method) = request.get("method").and_then(Value::as_str) else {
        return rpc_error(id, -32600, "invalid request");
    };
    let params = match request.get("params") {
        None => Vec::new(),
        Some(Value::Array(p)) => p.clone(),
        Some(_) => return rpc_error(id, -32602, "params must be an array"),
    };
    let result = match method {
        "eth_chainId" => Ok(state
            .ledger
            .first()
            .map_or(Value::Null, |h| json!(encode_quantity(h.chain.chain_id)))),
        "eth_blockNumber" => Ok(json!(encode_quantity(state.head().unwrap_or(0)))),
        "eth_getBlockByNumber" => block_param(state, params.first()).map(|n| {
            n.and_then(|n| state.block(n))
                .map_or(Value::Null, encode_block)
        }),
        "eth_feeHistory" => fee_history(state, &params),
        _ => return rpc_error(id, -32601, &format!("method {method} not found")),
    };
    match result {
        Ok(result) => json!({ "jsonrpc": "2.0", "id": id, "result": result }),
        Err(message) => rpc_error(id, -32602, &message),
    }
}

async fn handle(State(state): State<Arc<NodeState>>, body: Bytes) -> Response {
    state.requests.fetch_add(1, Ordering::Relaxed);
    if state.down.load(Ordering::SeqCst)
        || state
            .fail_next
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
    {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let response = match serde_json::from_slice::<Value>(&body) {
        Err(_) => rpc_error(Value::Null, -32700, "parse error"),
        Ok(Value::Array(batch)) if !batch.is_empty() => {
            Value::Array(batch.iter().map(|r| dispatch(&state, r)).collect())
        }
        Ok(request) => dispatch(&state, &request),
    };
    Json(response).into_response()
}

/// A node serving a fixed ledger on a background thread.
pub struct RunningNode {
    addr: SocketAddr,
    state: Arc<NodeState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl RunningNode {
    /// Serves on an ephemeral localhost port.
    pub fn start(ledger: Vec<RawBlockHeader>, clock: Clock) -> std::io::Result<Self> {
        Self::start_on(([127, 0, 0, 1], 0).into(), ledger, clock)
    }

    pub fn start_on(
        addr: SocketAddr,
        ledger: Vec<RawBlockHeader>,
        clock: Clock,
    ) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(NodeState {
            ledger,
            clock,
            fail_next: AtomicU32::new(0),
            down: AtomicBool::new(false),
            requests: AtomicU64::new(0),
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = Router::new()
            .route("/", post(handle))
            .with_state(state.clone());
        let thread = std::thread::Builder::new()
            .name(format!("simnode-{addr}"))
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)
                        .expect("listener registers with runtime");
                    let served = axum::serve(listener, app).with_graceful_shutdown(async {
                        let _ = rx.await;
                    });
                    if let Err(e) = served.await {
                        tracing::error!(error = %e, "simnode server failed");
                    }
                });
            })?;
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Moves a virtual clock; no effect on a real clock.
    pub fn set_time(&self, now: u64) {
        if let Clock::Virtual(t) = &self.state.clock {
            t.store(now, Ordering::SeqCst);
        }
    }

    pub fn head(&self) -> Option<u64> {
        self.state.head()
    }

    /// The next `n` requests get HTTP 503.
    pub fn fail_next(&self, n: u32) {
        self.state.fail_next.store(n, Ordering::SeqCst);
    }

    /// While down, every request gets HTTP 503.
    pub fn set_down(&self, down: bool) {
        self.state.down.store(down, Ordering::SeqCst);
    }

    pub fn request_count(&self) -> u64 {
        self.state.requests.load(Ordering::Relaxed)
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        self.stop();
    }
}
