//! A small complex-event-processing toolkit: typed operator chains with
//! per-key event-time tumbling windows and a terminal sink.
//!
//! Pipelines are built front to back and run single-threaded:
//!
//! ```
//! use streammon::cep::Pipeline;
//!
//! let (tx, rx) = std::sync::mpsc::channel();
//! let report = Pipeline::<u32>::new()
//!     .map("double", |x| x * 2)
//!     .filter("small", |x| *x < 10)
//!     .sink("collect", move |x| tx.send(x))
//!     .run(0..10)
//!     .unwrap();
//! assert_eq!(rx.iter().collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
//! assert_eq!(report.stage("small").unwrap().records_out, 5);
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Records that can be windowed: a partition key and an event time in unix seconds.
pub trait Keyed {
    fn key(&self) -> &str;
    fn event_time(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowAssignment {
    pub key: String,
    pub start: u64,
    /// Exclusive.
    pub end: u64,
}

pub fn assign_tumbling_window(key: &str, timestamp: u64, width_s: u64) -> WindowAssignment {
    assert!(width_s > 0, "window width must be positive");
    let start = timestamp - timestamp % width_s;
    WindowAssignment {
        key: key.to_owned(),
        start,
        end: start + width_s,
    }
}

/// Contents of a flushed window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    pub assignment: WindowAssignment,
    pub items: Vec<T>,
    /// Flushed at end of input rather than by a later record passing its end.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Map,
    Filter,
    TumblingWindow,
    Aggregate,
    Sink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub kind: StageKind,
    pub records_in: u64,
    pub records_out: u64,
    /// For window stages: records contained in flushed windows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_members: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub source_records: u64,
    pub stages: Vec<StageReport>,
    pub dead_letters: Vec<DeadLetter>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn dead_letter_count(&self) -> usize {
        self.dead_letters.len()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CepError {
    #[error("sink {stage} failed: {reason}")]
    SinkFailure { stage: String, reason: String },
}

/// A run stopped by a failing sink, with the counts up to that point.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct PipelineAborted {
    pub error: CepError,
    pub report: RunReport,
}

struct Ctx {
    report: RunReport,
}

impl Ctx {
    fn stage(&mut self, idx: usize) -> &mut StageReport {
        &mut self.report.stages[idx]
    }

    fn dead_letter(&mut self, idx: usize, reason: String) {
        let stage = self.report.stages[idx].name.clone();
        self.report.dead_letters.push(DeadLetter { stage, reason });
    }
}

trait Operator<T> {
    fn push(&mut self, item: T, ctx: &mut Ctx) -> Result<(), CepError>;
    fn finish(&mut self, ctx: &mut Ctx) -> Result<(), CepError>;
}

type Downstream<T> = Box<dyn Operator<T>>;
type Wrap<In, Out> = Box<dyn FnOnce(Downstream<Out>) -> Downstream<In>>;

/// A chain of stages from `In` records to `Out` records, not yet terminated by a sink.
pub struct Pipeline<In, Out = In> {
    stages: Vec<StageReport>,
    wrap: Wrap<In, Out>,
}

impl<In: 'static> Pipeline<In, In> {
    pub fn new() -> Self {
        Self {
            stages: Vec::new(),
            wrap: Box::new(|down| down),
        }
    }
}

impl<In: 'static> Default for Pipeline<In, In> {
    fn default() -> Self {
        Self::new()
    }
}

impl<In: 'static, Out: 'static> Pipeline<In, Out> {
    fn add_stage(&mut self, name: &str, kind: StageKind) -> usize {
        self.stages.push(StageReport {
            name: name.to_owned(),
            kind,
            records_in: 0,
            records_out: 0,
            window_members: (kind == StageKind::TumblingWindow).then_some(0),
        });
        self.stages.len() - 1
    }

    fn then<Next: 'static>(
        self,
        make: impl FnOnce(Downstream<Next>) -> Downstream<Out> + 'static,
    ) -> Pipeline<In, Next> {
        let wrap = self.wrap;
        Pipeline {
            stages: self.stages,
            wrap: Box::new(move |down| wrap(make(down))),
        }
    }

    pub fn map<Next: 'static>(
        self,
        name: &str,
        mut f: impl FnMut(Out) -> Next + 'static,
    ) -> Pipeline<In, Next> {
        self.try_map(name, move |x| Ok::<_, std::convert::Infallible>(f(x)))
    }

    /// Like [`Pipeline::map`]; records for which `f` fails go to the dead-letter list.
    pub fn try_map<Next: 'static, E: fmt::Display>(
        mut self,
        name: &str,
        f: impl FnMut(Out) -> Result<Next, E> + 'static,
    ) -> Pipeline<In, Next> {
        let idx = self.add_stage(name, StageKind::Map);
        self.then(move |down| Box::new(MapOp { idx, f, down }))
    }

    pub fn filter(
        mut self,
        name: &str,
        pred: impl FnMut(&Out) -> bool + 'static,
    ) -> Pipeline<In, Out> {
        let idx = self.add_stage(name, StageKind::Filter);
        self.then(move |down| Box::new(FilterOp { idx, pred, down }))
    }

    /// Groups records per key into event-time tumbling windows of `width_s`
    /// seconds. A window flushes when a later record for its key reaches its
    /// end, or when the input ends. Records older than the key's watermark
    /// (latest event time seen) are dead-lettered.
    pub fn tumbling_window(mut self, name: &str, width_s: u64) -> WindowedPipeline<In, Out>
    where
        Out: Keyed,
    {
        assert!(width_s > 0, "window width must be positive");
        let idx = self.add_stage(name, StageKind::TumblingWindow);
        WindowedPipeline {
            inner: self,
            idx,
            width_s,
        }
    }

    pub fn sink<E: fmt::Display>(
        mut self,
        name: &str,
        f: impl FnMut(Out) -> Result<(), E> + 'static,
    ) -> RunnablePipeline<In> {
        let idx = self.add_stage(name, StageKind::Sink);
        let head = (self.wrap)(Box::new(SinkOp { idx, f }));
        RunnablePipeline {
            stages: self.stages,
            head,
        }
    }
}

/// A pipeline whose last stage is a window; only an aggregate may follow.
pub struct WindowedPipeline<In, T> {
    inner: Pipeline<In, T>,
    idx: usize,
    width_s: u64,
}

impl<In: 'static, T: Keyed + 'static> WindowedPipeline<In, T> {
    pub fn aggregate<A: 'static>(
        self,
        name: &str,
        mut f: impl FnMut(Window<T>) -> A + 'static,
    ) -> Pipeline<In, A> {
        let Self {
            mut inner,
            idx: window_idx,
            width_s,
        } = self;
        let agg_idx = inner.add_stage(name, StageKind::Aggregate);
        inner.then(move |down| {
            let aggregate = Box::new(MapOp {
                idx: agg_idx,
                f: move |w| Ok::<_, std::convert::Infallible>(f(w)),
                down,
            });
            Box::new(WindowOp {
                idx: window_idx,
                width_s,
                open: HashMap::new(),
                watermarks: HashMap::new(),
                down: aggregate,
            })
        })
    }
}

pub struct RunnablePipeline<In> {
    stages: Vec<StageReport>,
    head: Downstream<In>,
}

impl<In> RunnablePipeline<In> {
    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.name.as_str()).collect()
    }

    /// Pushes every source record through, then flushes open windows.
    pub fn run(
        mut self,
        source: impl IntoIterator<Item = In>,
    ) -> Result<RunReport, PipelineAborted> {
        let mut ctx = Ctx {
            report: RunReport {
                source_records: 0,
                stages: self.stages,
                dead_letters: Vec::new(),
            },
        };
        let mut outcome = Ok(());
        for item in source {
            ctx.report.source_records += 1;
            outcome = self.head.push(item, &mut ctx);
            if outcome.is_err() {
                break;
            }
        }
        if outcome.is_ok() {
            outcome = self.head.finish(&mut ctx);
        }
        match outcome {
            Ok(()) => Ok(ctx.report),
            Err(error) => Err(PipelineAborted {
                error,
                report: ctx.report,
            }),
        }
    }
}

struct MapOp<F, D> {
    idx: usize,
    f: F,
    down: D,
}

impl<T, N, E, F> Operator<T> for MapOp<F, Downstream<N>>
where
    F: FnMut(T) -> Result<N, E>,
    E: fmt::Display,
{
    fn push(&mut self, item: T, ctx: &mut Ctx) -> Result<(), CepError> {
        ctx.stage(self.idx).records_in += 1;
        match (self.f)(item) {
            Ok(out) => {
                ctx.stage(self.idx).records_out += 1;
                self.down.push(out, ctx)
            }
            Err(e) => {
                ctx.dead_letter(self.idx, e.to_string());
                Ok(())
            }
        }
    }

    fn finish(&mut self, ctx: &mut Ctx) -> Result<(), CepError> {
        self.down.finish(ctx)
    }
}

struct FilterOp<P, T> {
    idx: usize,
    pred: P,
    down: Downstream<T>,
}

impl<T, P: FnMut(&T) -> bool> Operator<T> for FilterOp<P, T> {
    fn push(&mut self, item: T, ctx: &mut Ctx) -> Result<(), CepError> {
        ctx.stage(self.idx).records_in += 1;
        if (self.pred)(&item) {
            ctx.stage(self.idx).records_out += 1;
            self.down.push(item, ctx)
        } else {
            Ok(())
        }
    }

    fn finish(&mut self, ctx: &mut Ctx) -> Result<(), CepError> {
        self.down.finish(ctx)
    }
}

struct WindowOp<T> {
    idx: usize,
    width_s: u64,
    open: HashMap<String, (WindowAssignment, Vec<T>)>,
    watermarks: HashMap<String, u64>,
    down: Downstream<Window<T>>,
}

impl<T> WindowOp<T> {
    fn emit(
        &mut self,
        assignment: WindowAssignment,
        items: Vec<T>,
        partial: bool,
        ctx: &mut Ctx,
    ) -> Result<(), CepError> {
        let stage = ctx.stage(self.idx);
        stage.records_out += 1;
        *stage.window_members.get_or_insert(0) += items.len() as u64;
        self.down.push(
            Window {
                assignment,
                items,
                partial,
            },
            ctx,
        )
    }
}

impl<T: Keyed> Operator<T> for WindowOp<T> {
    fn push(&mut self, item: T, ctx: &mut Ctx) -> Result<(), CepError> {
        ctx.stage(self.idx).records_in += 1;
        let ts = item.event_time();
        let key = item.key();
        if let Some(&watermark) = self.watermarks.get(key) {
            if ts < watermark {
                ctx.dead_letter(
                    self.idx,
                    format!("late record for {key}: event time {ts} < watermark {watermark}"),
                );
                return Ok(());
            }
        }
        self.watermarks.insert(key.to_owned(), ts);

        let flush = match self.open.get_mut(key) {
            Some((assignment, items)) if ts < assignment.end => {
                items.push(item);
                return Ok(());
            }
            Some(_) => self.open.remove(key),
            None => None,
        };
        let assignment = assign_tumbling_window(key, ts, self.width_s);
        self.open
            .insert(assignment.key.clone(), (assignment, vec![item]));
        if let Some((done, items)) = flush {
            self.emit(done, items, false, ctx)?;
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut Ctx) -> Result<(), CepError> {
        let remaining: BTreeMap<WindowAssignment, Vec<T>> =
            self.open.drain().map(|(_, w)| w).collect();
        for (assignment, items) in remaining {
            self.emit(assignment, items, true, ctx)?;
        }
        self.down.finish(ctx)
    }
}

struct SinkOp<F> {
    idx: usize,
    f: F,
}

impl<T, E: fmt::Display, F: FnMut(T) -> Result<(), E>> Operator<T> for SinkOp<F> {
    fn push(&mut self, item: T, ctx: &mut Ctx) -> Result<(), CepError> {
        ctx.stage(self.idx).records_in += 1;
        (self.f)(item).map_err(|e| CepError::SinkFailure {
            stage: ctx.report.stages[self.idx].name.clone(),
            reason: e.to_string(),
        })?;
        ctx.stage(self.idx).records_out += 1;
        Ok(())
    }

    fn finish(&mut self, _ctx: &mut Ctx) -> Result<(), CepError> {
        Ok(())
    }
}
