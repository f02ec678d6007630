//! Per-chain orchestration for live monitoring and replay, plus the
//! offline `stats` and `plot` operations over metric series files.
//!
//! Each configured chain gets two topics, `<chain>.raw` and
//! `<chain>.normalized`, and four single-threaded pipelines:
//!
//! ```text
//! feeder ──> <chain>.raw ──┬─ normalizer ──> <chain>.normalized ──┬─ analytics (windows.jsonl)
//!                          └─ raw archive (raw.jsonl)             └─ archive (normalized + series JSONL)
//! ```
//!
//! The feeder is either an RPC poll loop or the lines of a replay file.
//! Closing the raw topic drains everything downstream and flushes open
//! windows as partial.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};

use crate::cep::{self, Keyed, Pipeline, Window};
use crate::config::{ConfigError, NetworkConfig, RunConfig};
use crate::metrics::{
    block_usage_sample, downsample, gas_price_sample, summarize, Bucket, MetricsError,
};
use crate::model::{
    ChainRef, MetricKind, MetricSample, NormalizedBlockRecord, RecordFlag, SummaryStats,
};
use crate::normalize::Normalizer;
use crate::plot::{buckets_csv, render_svg, ChartOptions, SeriesRef, YScale};
use crate::records::{to_line, HeaderRecord, MetricRecord, NormalizedRecord, WindowRecord};
use crate::streamlog::{ConsumerHandle, LogError, Record, RecordStream, StartPosition, StreamLog};

pub const RAW_GROUPS: [&str; 2] = ["normalizer", "archive-raw"];
pub const NORMALIZED_GROUPS: [&str; 2] = ["analytics", "archive"];
pub const REPORT_FILE: &str = "report.json";
const BATCH: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: stats and plots need a single series, found {first} and {other}")]
    MixedSeries {
        path: PathBuf,
        first: String,
        other: String,
    },
    #[error("{path}: {source}")]
    Series { path: PathBuf, source: MetricsError },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("{chain}: {reason}")]
    Pipeline { chain: String, reason: String },
    #[error(transparent)]
    Log(#[from] LogError),
}

impl RunError {
    /// 1 for configuration problems, 2 for bad input data, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Input { .. }
            | RunError::MalformedRecord { .. }
            | RunError::MixedSeries { .. }
            | RunError::Series { .. } => 2,
            RunError::Output { .. } | RunError::Pipeline { .. } | RunError::Log(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Monitor,
    Replay,
}

/// How a chain's feeder ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedStatus {
    /// All replay input for the chain was delivered.
    Exhausted,
    /// Reached the configured `stop_after_block`.
    Completed,
    Stopped,
    /// A downstream pipeline stopped accepting records.
    SinkClosed,
    /// Ingest gave up on a block that kept failing validation.
    Halted {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: MetricKind,
    pub samples: u64,
    pub stats: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: String,
    pub chain_id: u64,
    pub feed: FeedStatus,
    pub raw_records: u64,
    pub normalized_records: u64,
    pub window_records: u64,
    pub flags: BTreeMap<RecordFlag, u64>,
    pub summaries: Vec<KindSummary>,
    pub pipelines: BTreeMap<String, cep::RunReport>,
}

impl ChainReport {
    pub fn summary(&self, kind: MetricKind) -> Option<&SummaryStats> {
        self.summaries
            .iter()
            .find(|s| s.kind == kind)
            .and_then(|s| s.stats.as_ref())
    }

    pub fn samples(&self, kind: MetricKind) -> u64 {
        self.summaries
            .iter()
            .find(|s| s.kind == kind)
            .map_or(0, |s| s.samples)
    }

    pub fn dead_letters(&self) -> usize {
        self.pipelines.values().map(|p| p.dead_letter_count()).sum()
    }
}

/// Written as `report.json` at the end of every monitor or replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub window_s: u64,
    pub downsample_bucket_s: u64,
    pub chains: Vec<ChainReport>,
}

impl RunReport {
    pub fn chain(&self, name: &str) -> Option<&ChainReport> {
        self.chains.iter().find(|c| c.chain == name)
    }
}

/// Output file locations for one chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPaths {
    pub dir: PathBuf,
}

impl ChainPaths {
    pub fn new(output_dir: &Path, chain: &str) -> Self {
        let safe: String = chain
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        Self {
            dir: output_dir.join(safe),
        }
    }

    pub fn raw(&self) -> PathBuf {
        self.dir.join("raw.jsonl")
    }

    pub fn normalized(&self) -> PathBuf {
        self.dir.join("normalized.jsonl")
    }

    pub fn windows(&self) -> PathBuf {
        self.dir.join("windows.jsonl")
    }

    pub fn series(&self, kind: MetricKind) -> PathBuf {
        self.dir.join(format!("{kind}.jsonl"))
    }

    pub fn csv(&self, kind: MetricKind) -> PathBuf {
        self.dir.join(format!("{kind}.csv"))
    }

    pub fn svg(&self, kind: MetricKind) -> PathBuf {
        self.dir.join(format!("{kind}.svg"))
    }
}

pub fn overview_svg_path(output_dir: &Path, kind: MetricKind) -> PathBuf {
    output_dir.join(format!("overview_{kind}.svg"))
}

fn raw_topic(chain: &str) -> String {
    format!("{chain}.raw")
}

fn normalized_topic(chain: &str) -> String {
    format!("{chain}.normalized")
}

struct LineWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LineWriter {
    fn create(path: PathBuf) -> Result<Self, RunError> {
        match File::create(&path) {
            Ok(f) => Ok(Self {
                path,
                out: BufWriter::new(f),
            }),
            Err(source) => Err(RunError::Output { path, source }),
        }
    }

    fn line(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.out.write_all(bytes)?;
        if bytes.last() != Some(&b'\n') {
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    fn finish(mut self) -> Result<(), RunError> {
        self.out.flush().map_err(|source| RunError::Output {
            path: self.path.clone(),
            source,
        })
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Output {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(path).map_err(|source| RunError::Output {
        path: path.to_owned(),
        source,
    })
}

struct BlockMetrics {
    gas: MetricSample,
    usage: MetricSample,
}

impl Keyed for BlockMetrics {
    fn key(&self) -> &str {
        &self.gas.chain.name
    }

    fn event_time(&self) -> u64 {
        self.gas.timestamp
    }
}

fn window_records(window: Window<BlockMetrics>) -> Vec<WindowRecord> {
    let a = &window.assignment;
    let mut out = Vec::with_capacity(2);
    for kind in MetricKind::ALL {
        let values: Vec<f64> = window
            .items
            .iter()
            .map(|m| match kind {
                MetricKind::GasPriceGwei => m.gas.value,
                MetricKind::BlockUsageRatio => m.usage.value,
            })
            .collect();
        match summarize(&values) {
            Ok(stats) => out.push(WindowRecord {
                chain: a.key.clone(),
                kind,
                window_start: a.start,
                window_end: a.end,
                partial: window.partial,
                stats,
            }),
            Err(e) => {
                tracing::warn!(chain = %a.key, %kind, start = a.start, error = %e, "window not summarized")
            }
        }
    }
    out
}

fn decode_normalized(
    chain: ChainRef,
) -> impl FnMut(Record) -> Result<NormalizedBlockRecord, serde_json::Error> {
    move |r| {
        serde_json::from_slice::<NormalizedRecord>(&r.payload).map(|n| n.to_record(chain.clone()))
    }
}

#[derive(Default)]
struct Archive {
    normalized: u64,
    flags: BTreeMap<RecordFlag, u64>,
    points: BTreeMap<MetricKind, Vec<(u64, f64)>>,
}

struct ArchiveWriters {
    normalized: LineWriter,
    gas: LineWriter,
    usage: LineWriter,
    archive: Archive,
}

impl ArchiveWriters {
    fn write(&mut self, record: &NormalizedBlockRecord) -> io::Result<()> {
        self.normalized
            .line(&to_line(&NormalizedRecord::from(record)))?;
        self.archive.normalized += 1;
        for flag in &record.flags {
            *self.archive.flags.entry(*flag).or_default() += 1;
        }
        let gas = gas_price_sample(record);
        self.gas.line(&to_line(&MetricRecord::from(&gas)))?;
        self.archive
            .points
            .entry(gas.kind)
            .or_default()
            .push((gas.timestamp, gas.value));
        match block_usage_sample(record) {
            Ok(usage) => {
                self.usage.line(&to_line(&MetricRecord::from(&usage)))?;
                self.archive
                    .points
                    .entry(usage.kind)
                    .or_default()
                    .push((usage.timestamp, usage.value));
            }
            Err(e) => {
                tracing::warn!(chain = %record.header.chain, block = record.header.number, error = %e, "no usage sample")
            }
        }
        Ok(())
    }
}

struct Stage<T> {
    report: cep::RunReport,
    output: T,
}

type Worker<T> = JoinHandle<Result<Stage<T>, RunError>>;

struct ChainWorkers {
    network: NetworkConfig,
    paths: ChainPaths,
    normalizer: Worker<()>,
    analytics: Worker<u64>,
    archive: Worker<Archive>,
    raw_archive: Worker<u64>,
}

fn subscribe_all(
    log: &StreamLog,
    topic: &str,
    groups: &[&str],
) -> Result<Vec<ConsumerHandle>, RunError> {
    groups
        .iter()
        .map(|g| {
            log.subscribe(topic, g, StartPosition::Earliest)
                .map_err(RunError::from)
        })
        .collect()
}

fn aborted(chain: &ChainRef, pipeline: &str, err: cep::PipelineAborted) -> RunError {
    RunError::Pipeline {
        chain: chain.name.clone(),
        reason: format!("{pipeline} pipeline aborted: {}", err.error),
    }
}

/// Creates the chain's topics and output files and starts its pipelines.
fn start_chain(
    log: &Arc<StreamLog>,
    config: &RunConfig,
    network: &NetworkConfig,
) -> Result<ChainWorkers, RunError> {
    let profile = network.profile.clone();
    let chain = profile.chain.clone();
    let paths = ChainPaths::new(&config.output_dir, &chain.name);
    create_dir(&paths.dir)?;
    let raw = raw_topic(&chain.name);
    let normalized = normalized_topic(&chain.name);
    log.create_topic(&raw, config.retention)?;
    log.create_topic(&normalized, config.retention)?;
    let mut raw_subs = subscribe_all(log, &raw, &RAW_GROUPS)?.into_iter();
    let mut norm_subs = subscribe_all(log, &normalized, &NORMALIZED_GROUPS)?.into_iter();
    let (normalizer_sub, raw_archive_sub) = (raw_subs.next().unwrap(), raw_subs.next().unwrap());
    let (analytics_sub, archive_sub) = (norm_subs.next().unwrap(), norm_subs.next().unwrap());

    let raw_writer = LineWriter::create(paths.raw())?;
    let windows_writer = LineWriter::create(paths.windows())?;
    let archive_writers = ArchiveWriters {
        normalized: LineWriter::create(paths.normalized())?,
        gas: LineWriter::create(paths.series(MetricKind::GasPriceGwei))?,
        usage: LineWriter::create(paths.series(MetricKind::BlockUsageRatio))?,
        archive: Archive::default(),
    };

    let normalizer = {
        let log = Arc::clone(log);
        let chain = chain.clone();
        let (raw, normalized) = (raw.clone(), normalized.clone());
        thread::spawn(move || {
            let mut normalizer = Normalizer::new(profile);
            let decode_chain = chain.clone();
            let publish_log = Arc::clone(&log);
            let publish_topic = normalized.clone();
            let result = Pipeline::<Record>::new()
                .try_map("decode", move |r: Record| {
                    serde_json::from_slice::<HeaderRecord>(&r.payload)
                        .map(|h| h.to_header(decode_chain.clone()))
                })
                .try_map("normalize", move |h| normalizer.normalize_header(h))
                .sink("publish", move |n: NormalizedBlockRecord| {
                    let payload =
                        serde_json::to_vec(&NormalizedRecord::from(&n)).expect("records serialize");
                    publish_log
                        .append_with_backpressure(&publish_topic, payload, &NORMALIZED_GROUPS)
                        .map(drop)
                })
                .run(RecordStream::new(normalizer_sub, BATCH));
            let _ = log.close(&normalized);
            result
                .map(|report| Stage { report, output: () })
                .map_err(|e| {
                    let _ = log.close(&raw);
                    aborted(&chain, "normalizer", e)
                })
        })
    };

    let analytics = {
        let log = Arc::clone(log);
        let chain = chain.clone();
        let normalized = normalized.clone();
        let window_s = config.window_s;
        thread::spawn(move || {
            let mut writer = windows_writer;
            let written = Rc::new(RefCell::new(0u64));
            let counter = Rc::clone(&written);
            let result = Pipeline::<Record>::new()
                .try_map("decode", decode_normalized(chain.clone()))
                .try_map("metrics", |r: NormalizedBlockRecord| {
                    block_usage_sample(&r).map(|usage| BlockMetrics {
                        gas: gas_price_sample(&r),
                        usage,
                    })
                })
                .tumbling_window("window", window_s)
                .aggregate("summarize", window_records)
                .sink("write-windows", move |records: Vec<WindowRecord>| {
                    for r in &records {
                        writer.line(&to_line(r))?;
                    }
                    *counter.borrow_mut() += records.len() as u64;
                    writer.flush()
                })
                .run(RecordStream::new(analytics_sub, BATCH));
            let written = *written.borrow();
            result
                .map(|report| Stage {
                    report,
                    output: written,
                })
                .map_err(|e| {
                    let _ = log.close(&normalized);
                    aborted(&chain, "analytics", e)
                })
        })
    };

    let archive = {
        let log = Arc::clone(log);
        let chain = chain.clone();
        let normalized = normalized.clone();
        thread::spawn(move || {
            let state = Rc::new(RefCell::new(archive_writers));
            let sink_state = Rc::clone(&state);
            let result = Pipeline::<Record>::new()
                .try_map("decode", decode_normalized(chain.clone()))
                .sink("write-series", move |r: NormalizedBlockRecord| {
                    sink_state.borrow_mut().write(&r)
                })
                .run(RecordStream::new(archive_sub, BATCH));
            let report = result.map_err(|e| {
                let _ = log.close(&normalized);
                aborted(&chain, "archive", e)
            })?;
            let w = Rc::try_unwrap(state)
                .ok()
                .expect("pipeline dropped its sink")
                .into_inner();
            w.normalized.finish()?;
            w.gas.finish()?;
            w.usage.finish()?;
            Ok(Stage {
                report,
                output: w.archive,
            })
        })
    };

    let raw_archive = {
        let log = Arc::clone(log);
        let chain = chain.clone();
        let raw = raw.clone();
        thread::spawn(move || {
            let writer = Rc::new(RefCell::new(raw_writer));
            let sink_writer = Rc::clone(&writer);
            let result = Pipeline::<Record>::new()
                .sink("write-raw", move |r: Record| {
                    sink_writer.borrow_mut().line(&r.payload)
                })
                .run(RecordStream::new(raw_archive_sub, BATCH));
            let report = result.map_err(|e| {
                let _ = log.close(&raw);
                aborted(&chain, "raw archive", e)
            })?;
            Rc::try_unwrap(writer)
                .ok()
                .expect("pipeline dropped its sink")
                .into_inner()
                .finish()?;
            let written = report.source_records;
            Ok(Stage {
                report,
                output: written,
            })
        })
    };

    Ok(ChainWorkers {
        network: network.clone(),
        paths,
        normalizer,
        analytics,
        archive,
        raw_archive,
    })
}

fn join<T>(chain: &str, handle: Worker<T>) -> Result<Stage<T>, RunError> {
    handle.join().unwrap_or_else(|_| {
        Err(RunError::Pipeline {
            chain: chain.to_owned(),
            reason: "pipeline thread panicked".into(),
        })
    })
}

struct FinishedChain {
    report: ChainReport,
    buckets: BTreeMap<MetricKind, Vec<Bucket>>,
}

fn finish_chain(
    workers: ChainWorkers,
    feed: FeedStatus,
    config: &RunConfig,
) -> Result<FinishedChain, RunError> {
    let name = workers.network.profile.chain.name.clone();
    // join everything before reporting the first failure so no thread outlives the run
    let normalizer = join(&name, workers.normalizer);
    let analytics = join(&name, workers.analytics);
    let archive = join(&name, workers.archive);
    let raw_archive = join(&name, workers.raw_archive);
    let (normalizer, analytics, archive, raw_archive) =
        (normalizer?, analytics?, archive?, raw_archive?);

    let mut pipelines = BTreeMap::new();
    pipelines.insert("normalizer".to_owned(), normalizer.report);
    pipelines.insert("analytics".to_owned(), analytics.report);
    pipelines.insert("archive".to_owned(), archive.report);
    pipelines.insert("raw_archive".to_owned(), raw_archive.report);

    let mut summaries = Vec::new();
    let mut buckets = BTreeMap::new();
    let mut points = archive.output.points;
    for kind in MetricKind::ALL {
        let mut series = points.remove(&kind).unwrap_or_default();
        let values: Vec<f64> = series.iter().map(|p| p.1).collect();
        let stats = if values.is_empty() {
            None
        } else {
            Some(summarize(&values).map_err(|source| RunError::Series {
                path: workers.paths.series(kind),
                source,
            })?)
        };
        summaries.push(KindSummary {
            kind,
            samples: values.len() as u64,
            stats,
        });

        series.sort_by_key(|p| p.0);
        let b = downsample(&series, config.downsample_bucket_s);
        write_file(&workers.paths.csv(kind), buckets_csv(&b).as_bytes())?;
        let svg = render_svg(
            &[SeriesRef {
                label: &name,
                buckets: &b,
            }],
            &ChartOptions {
                title: format!("{name} {kind}"),
                y_label: kind.to_string(),
                y_scale: YScale::Linear,
            },
        );
        write_file(&workers.paths.svg(kind), svg.as_bytes())?;
        buckets.insert(kind, b);
    }

    Ok(FinishedChain {
        report: ChainReport {
            chain: name,
            chain_id: workers.network.profile.chain.chain_id,
            feed,
            raw_records: raw_archive.output,
            normalized_records: archive.output.normalized,
            window_records: analytics.output,
            flags: archive.output.flags,
            summaries,
            pipelines,
        },
        buckets,
    })
}

fn finish_run(
    mode: RunMode,
    config: &RunConfig,
    chains: Vec<(ChainWorkers, FeedStatus)>,
) -> Result<RunReport, RunError> {
    let mut finished = Vec::new();
    let mut first_error = None;
    for (workers, feed) in chains {
        match finish_chain(workers, feed, config) {
            Ok(f) => finished.push(f),
            Err(e) => {
                tracing::error!(error = %e, "chain failed");
                first_error.get_or_insert(e);
            }
        }
    }
    for kind in MetricKind::ALL {
        let series: Vec<SeriesRef<'_>> = finished
            .iter()
            .map(|f| SeriesRef {
                label: &f.report.chain,
                buckets: f.buckets.get(&kind).map_or(&[][..], Vec::as_slice),
            })
            .collect();
        let y_scale = match kind {
            MetricKind::GasPriceGwei => YScale::Log10,
            MetricKind::BlockUsageRatio => YScale::Linear,
        };
        let svg = render_svg(
            &series,
            &ChartOptions {
                title: format!("{kind} by chain"),
                y_label: kind.to_string(),
                y_scale,
            },
        );
        write_file(&overview_svg_path(&config.output_dir, kind), svg.as_bytes())?;
    }
    let report = RunReport {
        mode,
        window_s: config.window_s,
        downsample_bucket_s: config.downsample_bucket_s,
        chains: finished.into_iter().map(|f| f.report).collect(),
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    write_file(&config.output_dir.join(REPORT_FILE), &json)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn start_all(config: &RunConfig) -> Result<(Arc<StreamLog>, Vec<ChainWorkers>), RunError> {
    create_dir(&config.output_dir)?;
    let log = Arc::new(StreamLog::new());
    let mut workers = Vec::new();
    for network in &config.networks {
        match start_chain(&log, config, network) {
            Ok(w) => workers.push(w),
            Err(e) => {
                for w in &workers {
                    let _ = log.close(&raw_topic(&w.network.profile.chain.name));
                }
                for w in workers {
                    let _ = finish_chain(w, FeedStatus::Stopped, config);
                }
                return Err(e);
            }
        }
    }
    Ok((log, workers))
}

/// Parses a JSONL file of raw headers, checking every record against the config.
pub fn read_replay_input(path: &Path, config: &RunConfig) -> Result<Vec<HeaderRecord>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Input {
        path: path.to_owned(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RunError::MalformedRecord {
            path: path.to_owned(),
            line: i + 1,
            reason,
        };
        let record: HeaderRecord =
            serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let network = config
            .network(&record.chain)
            .ok_or_else(|| malformed(format!("chain {:?} is not configured", record.chain)))?;
        record
            .to_header(network.profile.chain.clone())
            .check()
            .map_err(malformed)?;
        records.push(record);
    }
    Ok(records)
}

/// Runs the monitoring pipelines over recorded headers. Outputs depend only
/// on the input and config contents.
pub fn run_replay(input: &Path, config: &RunConfig) -> Result<RunReport, RunError> {
    let records = read_replay_input(input, config)?;
    let (log, workers) = start_all(config)?;
    let mut closed = BTreeMap::new();
    for record in &records {
        if closed.contains_key(&record.chain) {
            continue;
        }
        let payload = serde_json::to_vec(record).expect("records serialize");
        if let Err(e) =
            log.append_with_backpressure(&raw_topic(&record.chain), payload, &RAW_GROUPS)
        {
            tracing::error!(chain = %record.chain, error = %e, "replay feed stopped");
            closed.insert(record.chain.clone(), ());
        }
    }
    let chains = workers
        .into_iter()
        .map(|w| {
            let name = &w.network.profile.chain.name;
            let _ = log.close(&raw_topic(name));
            let feed = if closed.contains_key(name) {
                FeedStatus::SinkClosed
            } else {
                FeedStatus::Exhausted
            };
            (w, feed)
        })
        .collect();
    finish_run(RunMode::Replay, config, chains)
}

#[cfg(feature = "net")]
pub use monitor::{run_monitor, run_monitor_observed, ChainEvent};

#[cfg(feature = "net")]
mod monitor {
    use super::*;
    use crate::ingest::{
        poll_chain, IngestCursor, PollOptions, PollOutcome, RpcClient, StartAt, StopSignal,
    };

    /// A chain's feeder finished.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct ChainEvent {
        pub chain: String,
        pub feed: FeedStatus,
    }

    /// Follows every configured chain until `stop` is raised or each chain
    /// reaches its `stop_after_block`, then flushes and writes the report.
    pub fn run_monitor(config: &RunConfig, stop: &StopSignal) -> Result<RunReport, RunError> {
        run_monitor_observed(config, stop, |_| {})
    }

    pub fn run_monitor_observed(
        config: &RunConfig,
        stop: &StopSignal,
        observer: impl Fn(&ChainEvent) + Send + Sync + 'static,
    ) -> Result<RunReport, RunError> {
        let (log, workers) = start_all(config)?;
        let observer = Arc::new(observer);
        let feeders: Vec<JoinHandle<FeedStatus>> = workers
            .iter()
            .map(|w| {
                let network = w.network.clone();
                let log = Arc::clone(&log);
                let stop = stop.clone();
                let observer = Arc::clone(&observer);
                thread::spawn(move || {
                    let profile = network.profile;
                    let chain = profile.chain.clone();
                    let topic = raw_topic(&chain.name);
                    let client = RpcClient::new(profile.rpc_url.clone(), chain.clone());
                    let options = PollOptions {
                        start: network.start_block.map_or(StartAt::Head, StartAt::Block),
                        stop_after: network.stop_after_block,
                        ..PollOptions::default()
                    };
                    let mut cursor = IngestCursor::new(chain.clone());
                    let emit = |header| {
                        let payload = serde_json::to_vec(&HeaderRecord::from(&header)).expect("records serialize");
                        log.append_with_backpressure(&topic, payload, &RAW_GROUPS).map(drop).map_err(drop)
                    };
                    let outcome = poll_chain(&client, &profile, &mut cursor, emit, &options, &stop);
                    let _ = log.close(&topic);
                    let feed = match outcome {
                        PollOutcome::Stopped => FeedStatus::Stopped,
                        PollOutcome::Completed => FeedStatus::Completed,
                        PollOutcome::SinkClosed => FeedStatus::SinkClosed,
                        PollOutcome::Halted(e) => FeedStatus::Halted { reason: e.to_string() },
                    };
                    tracing::info!(chain = %chain, ?feed, last = ?cursor.last_emitted, "ingest finished");
                    observer(&ChainEvent { chain: chain.name, feed: feed.clone() });
                    feed
                })
            })
            .collect();
        let chains = workers
            .into_iter()
            .zip(feeders)
            .map(|(w, f)| {
                let feed = f.join().unwrap_or(FeedStatus::Halted {
                    reason: "ingest thread panicked".into(),
                });
                (w, feed)
            })
            .collect();
        finish_run(RunMode::Monitor, config, chains)
    }
}

/// One metric series read back from a JSONL file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub chain: String,
    pub kind: MetricKind,
    /// `(timestamp, value)` in file order.
    pub points: Vec<(u64, f64)>,
}

pub fn read_series(path: &Path) -> Result<SeriesFile, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Input {
        path: path.to_owned(),
        source,
    })?;
    let mut head: Option<(String, MetricKind)> = None;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: MetricRecord =
            serde_json::from_str(line).map_err(|e| RunError::MalformedRecord {
                path: path.to_owned(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        match &head {
            None => head = Some((r.chain.clone(), r.kind)),
            Some((chain, kind)) if *chain != r.chain || *kind != r.kind => {
                return Err(RunError::MixedSeries {
                    path: path.to_owned(),
                    first: format!("{chain}/{kind}"),
                    other: format!("{}/{}", r.chain, r.kind),
                });
            }
            Some(_) => {}
        }
        points.push((r.ts, r.value));
    }
    let (chain, kind) = head.ok_or_else(|| RunError::Series {
        path: path.to_owned(),
        source: MetricsError::EmptySeries,
    })?;
    Ok(SeriesFile {
        chain,
        kind,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub chain: String,
    pub kind: MetricKind,
    pub stats: SummaryStats,
}

/// Where `stats` writes its result when no path is given: `x.jsonl` → `x.stats.json`.
pub fn default_stats_path(input: &Path) -> PathBuf {
    input.with_extension("stats.json")
}

/// Whole-series statistics of a metric file, also written as JSON to `out`.
pub fn run_stats(input: &Path, out: &Path) -> Result<StatsOutput, RunError> {
    let series = read_series(input)?;
    let values: Vec<f64> = series.points.iter().map(|p| p.1).collect();
    let stats = summarize(&values).map_err(|source| RunError::Series {
        path: input.to_owned(),
        source,
    })?;
    let output = StatsOutput {
        chain: series.chain,
        kind: series.kind,
        stats,
    };
    let mut json = serde_json::to_vec_pretty(&output).expect("stats serialize");
    json.push(b'\n');
    write_file(out, &json)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOutput {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub buckets: Vec<Bucket>,
}

/// Downsamples a metric file into `<out>.csv` and `<out>.svg`.
pub fn run_plot(
    input: &Path,
    bucket_s: u64,
    out: &Path,
    y_scale: YScale,
) -> Result<PlotOutput, RunError> {
    if bucket_s == 0 {
        return Err(RunError::Config(ConfigError::Parse(
            "bucket width must be positive".into(),
        )));
    }
    let mut series = read_series(input)?;
    series.points.sort_by_key(|p| p.0);
    let buckets = downsample(&series.points, bucket_s);
    let csv = out.with_extension("csv");
    let svg = out.with_extension("svg");
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(&csv, buckets_csv(&buckets).as_bytes())?;
    let chart = render_svg(
        &[SeriesRef {
            label: &series.chain,
            buckets: &buckets,
        }],
        &ChartOptions {
            title: format!("{} {} ({bucket_s} s buckets)", series.chain, series.kind),
            y_label: series.kind.to_string(),
            y_scale,
        },
    );
    write_file(&svg, chart.as_bytes())?;
    Ok(PlotOutput { csv, svg, buckets })
}
