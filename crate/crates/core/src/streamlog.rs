//! Embedded append-only log with retention and consumer-group offsets.
//!
//! One partition per topic. Every consumer group sees every retained record,
//! so independent pipelines can read the same stream in parallel.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Condvar, Mutex, RwLock};

pub const DEFAULT_MAX_RECORDS: usize = 100_000;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LogError {
    #[error("topic {0:?} does not exist")]
    TopicMissing(String),
    #[error("topic {0:?} already exists")]
    TopicExists(String),
    #[error("topic {0:?} is closed for appends")]
    TopicClosed(String),
    #[error("invalid retention: {0}")]
    InvalidRetention(String),
    #[error("offset {requested} was evicted; earliest retained is {earliest}")]
    OffsetEvicted { requested: u64, earliest: u64 },
    #[error("offset {requested} is beyond the log end {next}")]
    OffsetOutOfRange { requested: u64, next: u64 },
    #[error("commit {requested} is behind committed offset {committed}")]
    CommitRegression { requested: u64, committed: u64 },
    #[error("commit {requested} is ahead of the last polled offset {last_polled:?}")]
    CommitAhead {
        requested: u64,
        last_polled: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Retention {
    pub max_records: Option<usize>,
    pub max_age_s: Option<u64>,
}

impl Default for Retention {
    fn default() -> Self {
        Self {
            max_records: Some(DEFAULT_MAX_RECORDS),
            max_age_s: None,
        }
    }
}

impl Retention {
    pub fn records(max: usize) -> Self {
        Self {
            max_records: Some(max),
            max_age_s: None,
        }
    }

    fn validate(&self) -> Result<(), LogError> {
        match (self.max_records, self.max_age_s) {
            (None, None) => Err(LogError::InvalidRetention("no bound set".into())),
            (Some(0), _) => Err(LogError::InvalidRetention(
                "max_records must be positive".into(),
            )),
            (_, Some(0)) => Err(LogError::InvalidRetention(
                "max_age_s must be positive".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub offset: u64,
    /// Unix seconds at append.
    pub timestamp: u64,
    pub payload: Arc<[u8]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPosition {
    Earliest,
    Latest,
    At(u64),
}

#[derive(Debug, Default)]
struct TopicState {
    records: VecDeque<Record>,
    /// Offset of `records[0]`, or of the next append when empty.
    base_offset: u64,
    next_offset: u64,
    newest_ts: u64,
    closed: bool,
    commits: HashMap<String, u64>,
    read_positions: HashMap<String, u64>,
}

impl TopicState {
    fn evict(&mut self, retention: &Retention) {
        if let Some(max) = retention.max_records {
            while self.records.len() > max {
                self.records.pop_front();
            }
        }
        if let Some(age) = retention.max_age_s {
            let horizon = self.newest_ts.saturating_sub(age);
            while self.records.front().is_some_and(|r| r.timestamp < horizon) {
                self.records.pop_front();
            }
        }
        self.base_offset = self.records.front().map_or(self.next_offset, |r| r.offset);
    }
}

#[derive(Debug)]
struct Topic {
    name: String,
    retention: Retention,
    state: Mutex<TopicState>,
    changed: Condvar,
}

/// A set of named topics. Cheap to share behind an `Arc`; all methods take `&self`.
#[derive(Debug, Default)]
pub struct StreamLog {
    topics: RwLock<HashMap<String, Arc<Topic>>>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl StreamLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_topic(&self, name: &str, retention: Retention) -> Result<(), LogError> {
        retention.validate()?;
        let mut topics = self.topics.write();
        if topics.contains_key(name) {
            return Err(LogError::TopicExists(name.into()));
        }
        topics.insert(
            name.into(),
            Arc::new(Topic {
                name: name.into(),
                retention,
                state: Mutex::new(TopicState::default()),
                changed: Condvar::new(),
            }),
        );
        Ok(())
    }

    pub fn topic_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.topics.read().keys().cloned().collect();
        names.sort();
        names
    }

    fn topic(&self, name: &str) -> Result<Arc<Topic>, LogError> {
        self.topics
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| LogError::TopicMissing(name.into()))
    }

    pub fn append(&self, topic: &str, payload: impl Into<Arc<[u8]>>) -> Result<u64, LogError> {
        self.append_at(topic, payload, now_unix())
    }

    /// Appends with an explicit timestamp, which drives age-based retention.
    pub fn append_at(
        &self,
        topic: &str,
        payload: impl Into<Arc<[u8]>>,
        timestamp: u64,
    ) -> Result<u64, LogError> {
        let topic = self.topic(topic)?;
        let mut state = topic.state.lock();
        append_locked(&topic, &mut state, payload.into(), timestamp)
    }

    /// Appends once every listed group has read far enough that the append
    /// cannot evict a record the group has not seen yet. Groups that never
    /// polled count as positioned at the earliest retained record.
    pub fn append_with_backpressure(
        &self,
        topic: &str,
        payload: impl Into<Arc<[u8]>>,
        groups: &[&str],
    ) -> Result<u64, LogError> {
        let topic = self.topic(topic)?;
        let mut state = topic.state.lock();
        if let Some(max) = topic.retention.max_records {
            loop {
                let slowest = groups
                    .iter()
                    .map(|g| {
                        state
                            .read_positions
                            .get(*g)
                            .copied()
                            .unwrap_or(state.base_offset)
                    })
                    .min()
                    .unwrap_or(state.next_offset);
                // after this append the log keeps offsets [next + 1 - max, next]
                if state.closed || slowest + max as u64 > state.next_offset {
                    break;
                }
                topic.changed.wait(&mut state);
            }
        }
        append_locked(&topic, &mut state, payload.into(), now_unix())
    }

    /// Marks the end of the stream. Blocking polls return `None` once caught up.
    pub fn close(&self, topic: &str) -> Result<(), LogError> {
        let topic = self.topic(topic)?;
        topic.state.lock().closed = true;
        topic.changed.notify_all();
        Ok(())
    }

    pub fn earliest_offset(&self, topic: &str) -> Result<u64, LogError> {
        Ok(self.topic(topic)?.state.lock().base_offset)
    }

    pub fn next_offset(&self, topic: &str) -> Result<u64, LogError> {
        Ok(self.topic(topic)?.state.lock().next_offset)
    }

    pub fn committed(&self, topic: &str, group: &str) -> Result<Option<u64>, LogError> {
        Ok(self.topic(topic)?.state.lock().commits.get(group).copied())
    }

    pub fn subscribe(
        &self,
        topic: &str,
        group: &str,
        start: StartPosition,
    ) -> Result<ConsumerHandle, LogError> {
        let topic = self.topic(topic)?;
        let (position, committed) = {
            let state = topic.state.lock();
            let position = match start {
                StartPosition::Earliest => state.base_offset,
                StartPosition::Latest => state.next_offset,
                StartPosition::At(offset) if offset < state.base_offset => {
                    return Err(LogError::OffsetEvicted {
                        requested: offset,
                        earliest: state.base_offset,
                    });
                }
                StartPosition::At(offset) if offset > state.next_offset => {
                    return Err(LogError::OffsetOutOfRange {
                        requested: offset,
                        next: state.next_offset,
                    });
                }
                StartPosition::At(offset) => offset,
            };
            (position, state.commits.get(group).copied())
        };
        Ok(ConsumerHandle {
            topic,
            group: group.into(),
            position,
            last_polled: None,
            committed,
        })
    }

    /// Resumes a group right after its committed offset, or from the earliest
    /// retained record when it has never committed.
    pub fn resume(&self, topic: &str, group: &str) -> Result<ConsumerHandle, LogError> {
        match self.committed(topic, group)? {
            Some(c) => self.subscribe(topic, group, StartPosition::At(c + 1)),
            None => self.subscribe(topic, group, StartPosition::Earliest),
        }
    }
}

fn append_locked(
    topic: &Topic,
    state: &mut TopicState,
    payload: Arc<[u8]>,
    timestamp: u64,
) -> Result<u64, LogError> {
    if state.closed {
        return Err(LogError::TopicClosed(topic.name.clone()));
    }
    let offset = state.next_offset;
    state.next_offset += 1;
    state.newest_ts = state.newest_ts.max(timestamp);
    state.records.push_back(Record {
        offset,
        timestamp,
        payload,
    });
    state.evict(&topic.retention);
    topic.changed.notify_all();
    Ok(offset)
}

/// A consumer's position in one topic. Owned by a single reader.
#[derive(Debug)]
pub struct ConsumerHandle {
    topic: Arc<Topic>,
    group: String,
    /// Next offset to read.
    position: u64,
    last_polled: Option<u64>,
    committed: Option<u64>,
}

impl ConsumerHandle {
    pub fn topic(&self) -> &str {
        &self.topic.name
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn committed_offset(&self) -> Option<u64> {
        self.committed
    }

    pub fn last_polled(&self) -> Option<u64> {
        self.last_polled
    }

    /// Up to `max` records after the current position, in offset order.
    /// Advances the read position, not the commit.
    pub fn poll_records(&mut self, max: usize) -> Vec<Record> {
        let topic = self.topic.clone();
        let mut state = topic.state.lock();
        let batch = self.take(&mut state, max);
        drop(state);
        if !batch.is_empty() {
            topic.changed.notify_all();
        }
        batch
    }

    /// Waits for records. Returns `None` once the topic is closed and fully
    /// read, and an empty batch if `timeout` passes first.
    pub fn poll_blocking(&mut self, max: usize, timeout: Option<Duration>) -> Option<Vec<Record>> {
        let topic = self.topic.clone();
        let mut state = topic.state.lock();
        loop {
            let batch = self.take(&mut state, max);
            if !batch.is_empty() {
                drop(state);
                topic.changed.notify_all();
                return Some(batch);
            }
            if state.closed {
                return None;
            }
            match timeout {
                Some(t) => {
                    if topic.changed.wait_for(&mut state, t).timed_out() {
                        return Some(Vec::new());
                    }
                }
                None => topic.changed.wait(&mut state),
            }
        }
    }

    fn take(&mut self, state: &mut TopicState, max: usize) -> Vec<Record> {
        // records evicted before being read are skipped, never reordered
        self.position = self.position.max(state.base_offset);
        let skip = (self.position - state.base_offset) as usize;
        let batch: Vec<Record> = state.records.iter().skip(skip).take(max).cloned().collect();
        if let Some(last) = batch.last() {
            self.position = last.offset + 1;
            self.last_polled = Some(last.offset);
        }
        state
            .read_positions
            .insert(self.group.clone(), self.position);
        batch
    }

    pub fn commit(&mut self, offset: u64) -> Result<(), LogError> {
        if let Some(committed) = self.committed {
            if offset < committed {
                return Err(LogError::CommitRegression {
                    requested: offset,
                    committed,
                });
            }
        }
        if self.last_polled.is_none_or(|last| offset > last) {
            return Err(LogError::CommitAhead {
                requested: offset,
                last_polled: self.last_polled,
            });
        }
        let mut state = self.topic.state.lock();
        let entry = state.commits.entry(self.group.clone()).or_insert(offset);
        *entry = (*entry).max(offset);
        self.committed = Some(*entry);
        Ok(())
    }
}

/// Iterates records of a topic until it is closed, blocking between batches.
pub struct RecordStream {
    handle: ConsumerHandle,
    buffer: VecDeque<Record>,
    batch: usize,
}

impl RecordStream {
    pub fn new(handle: ConsumerHandle, batch: usize) -> Self {
        Self {
            handle,
            buffer: VecDeque::new(),
            batch: batch.max(1),
        }
    }
}

impl Iterator for RecordStream {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        while self.buffer.is_empty() {
            self.buffer
                .extend(self.handle.poll_blocking(self.batch, None)?);
        }
        self.buffer.pop_front()
    }
}
