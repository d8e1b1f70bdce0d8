//! High-recall review campaigns run across the interplanetary link.
//!
//! Four scenarios share one event-driven runner. A reviewer on Mars judges
//! documents one at a time under the reading-time model; a learner on Earth
//! (the only side holding the full corpus) retrains on arriving judgments
//! and ships batches of its current best unshipped documents back. The
//! scenarios differ only in link delay, shipping runway, and whether Mars
//! starts with a local document cache:
//!
//! - [`ScenarioKind::EarthTar`] — reviewer and learner co-located; the link
//!   is forced to zero delay and judging proceeds back to back.
//! - [`ScenarioKind::EarthTarLatency`] — same strict batch lockstep, but
//!   every batch round trip crosses the link while the reviewer idles.
//! - [`ScenarioKind::MarsTarNoCache`] — Earth keeps enough documents in
//!   flight to cover one round trip of reading, so the reviewer idles only
//!   for the initial round trip.
//! - [`ScenarioKind::MarsTarWithCache`] — as above, plus a seed cache on
//!   Mars; a second, local learner orders the cache so judging starts
//!   immediately instead of idling through the first round trip.
//!
//! The runner keeps Earth's view of outstanding work ("pending": shipped
//! documents whose judgments have not come back) at or below a watermark
//! of `ceil(rtt / MIN_READING_TIME_S)` documents — the most a reviewer
//! could consume during one silent round trip. A watermark of zero
//! degenerates to per-batch lockstep, which is why all four scenarios
//! coincide exactly when the link delay is zero.

pub mod cal;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{Qrels, TopicDescriptor};
use crate::simkernel::{Endpoint, Event, Kernel, LinkConfig, SimTime};

pub use cal::{
    batch_schedule, next_batch_size, reading_time_s, CalParams, CalState, PreparedCorpus,
    MIN_READING_TIME_S,
};

/// Which campaign formulation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    EarthTar,
    EarthTarLatency,
    MarsTarNoCache,
    MarsTarWithCache,
}

/// A campaign configuration: formulation, link, and concretization knobs.
#[derive(Debug, Clone)]
pub struct RecallScenario {
    pub kind: ScenarioKind,
    pub link: LinkConfig,
    /// Documents already on Mars at start. Required for
    /// [`ScenarioKind::MarsTarWithCache`], forbidden otherwise.
    pub cache_seed: Option<BTreeSet<String>>,
    /// Seeds the presumed-negative sampling on both learners.
    pub seed: u64,
    pub cal: CalParams,
    /// Overrides the shipping runway (in documents). `None` derives it
    /// from the link: zero for the lockstep formulations, one round trip
    /// of minimum reading time otherwise.
    pub watermark: Option<usize>,
}

impl RecallScenario {
    pub fn new(kind: ScenarioKind, link: LinkConfig) -> RecallScenario {
        RecallScenario {
            kind,
            link,
            cache_seed: None,
            seed: 0,
            cal: CalParams::default(),
            watermark: None,
        }
    }

    pub fn with_cache_seed(mut self, docids: impl IntoIterator<Item = String>) -> RecallScenario {
        self.cache_seed = Some(docids.into_iter().collect());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> RecallScenario {
        self.seed = seed;
        self
    }
}

/// When to end a run. Both limits optional; with neither, the run ends
/// when no document is judgable anywhere and none is in flight.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StopRule {
    pub time_budget_s: Option<f64>,
    pub recall_target: Option<f64>,
}

impl StopRule {
    /// Run until nothing is left to judge.
    pub const EXHAUSTION: StopRule = StopRule { time_budget_s: None, recall_target: None };

    pub fn time_budget(seconds: f64) -> StopRule {
        assert!(seconds.is_finite() && seconds >= 0.0, "time budget must be non-negative");
        StopRule { time_budget_s: Some(seconds), recall_target: None }
    }

    pub fn recall_target(recall: f64) -> StopRule {
        assert!((0.0..=1.0).contains(&recall), "recall target must be in [0, 1]");
        StopRule { time_budget_s: None, recall_target: Some(recall) }
    }
}

/// One judgment on the gain curve: where the run stood when it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub time_s: f64,
    pub recall: f64,
    /// Documents delivered to the reviewer's queue so far.
    pub docs_shipped: u64,
}

/// Recall as a function of virtual time for one topic and scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    /// One point per judgment, in time order.
    pub points: Vec<GainPoint>,
    /// Relevant documents for the topic present in the corpus.
    pub relevant_total: usize,
    /// Documents judged by the reviewer.
    pub judged: usize,
    /// Documents delivered to the reviewer's queue (cache members named
    /// in a directive count; locally self-selected cache reads do not).
    pub docs_shipped: u64,
    /// Documents physically transferred over the link (cache members
    /// excluded: only a directive crosses, the content is already there).
    pub transmitted: u64,
}

impl GainCurve {
    /// Virtual time of the first point at or above `target` recall.
    pub fn time_to_recall(&self, target: f64) -> Option<f64> {
        self.points.iter().find(|p| p.recall >= target).map(|p| p.time_s)
    }

    pub fn final_recall(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.recall)
    }
}

#[derive(Debug, Error)]
pub enum RecallError {
    #[error("no judgments exist for topic {0:?}")]
    UnknownTopic(String),
    #[error("topic {0:?} has no relevant documents in the corpus")]
    NoRelevantDocs(String),
    #[error("scenario requires a cache seed and none was given")]
    MissingCacheSeed,
    #[error("cache seed names docid {0:?}, which is not in the corpus")]
    UnknownCacheDoc(String),
    #[error("cache seed given for a scenario that starts with no cache")]
    UnexpectedCacheSeed,
}

/// Link traffic and reviewer timers.
#[derive(Debug, Clone)]
enum Msg {
    /// The initial request from Mars that starts Earth shipping.
    Query,
    /// A reviewer verdict travelling back to Earth.
    Judgment { doc: usize, relevant: bool },
    /// A batch directive from Earth: document numbers to review, in rank
    /// order. Cache members carry no content, only the instruction.
    Shipment { docs: Vec<usize> },
    /// Mars-local timer: the reviewer finishes reading `doc` now.
    Finished { doc: usize },
}

struct Runner<'a> {
    prepared: &'a PreparedCorpus,
    relevant: BTreeSet<usize>,
    cache: BTreeSet<usize>,
    watermark: usize,
    // Earth: the full-corpus learner.
    earth: CalState,
    shipped: BTreeSet<usize>,
    awaiting: BTreeSet<usize>,
    exhausted: bool,
    // Mars: the reviewer, a delivery queue, and (with a cache) a local learner.
    fifo: VecDeque<usize>,
    reading: Option<usize>,
    local: Option<CalState>,
    judged: BTreeMap<usize, bool>,
    // Accounting.
    points: Vec<GainPoint>,
    relevant_found: usize,
    docs_shipped: u64,
    transmitted: u64,
    recall_target: Option<f64>,
    done: bool,
}

impl<'a> Runner<'a> {
    fn handle(&mut self, kernel: &mut Kernel<Msg>, ev: Event<Msg>) {
        match ev.payload {
            Msg::Query => self.earth_trigger(kernel, ev.at),
            Msg::Judgment { doc, relevant } => {
                self.earth.label(doc, relevant);
                self.awaiting.remove(&doc);
                self.earth_trigger(kernel, ev.at);
            }
            Msg::Shipment { docs } => {
                for doc in docs {
                    // A race can deliver a document the reviewer already
                    // picked locally; drop it unread and uncounted.
                    if self.judged.contains_key(&doc) || self.reading == Some(doc) {
                        continue;
                    }
                    self.fifo.push_back(doc);
                    self.docs_shipped += 1;
                }
            }
            Msg::Finished { doc } => self.finish(kernel, ev.at, doc),
        }
    }

    /// Ships the next batch if Earth's outstanding work has drained to the
    /// watermark: enough to restore one round trip of runway plus the
    /// current batch. An empty ranking means the corpus is exhausted.
    fn earth_trigger(&mut self, kernel: &mut Kernel<Msg>, at: SimTime) {
        if self.exhausted || self.awaiting.len() > self.watermark {
            return;
        }
        let prepared = self.prepared;
        self.earth.retrain(prepared);
        let want = self.watermark + self.earth.batch_size() - self.awaiting.len();
        let batch = self.earth.rank(prepared, &self.shipped, want);
        if batch.is_empty() {
            self.exhausted = true;
            return;
        }
        self.earth.advance_batch();
        for &doc in &batch {
            self.shipped.insert(doc);
            self.awaiting.insert(doc);
            if !self.cache.contains(&doc) {
                self.transmitted += 1;
            }
        }
        kernel
            .transmit(Msg::Shipment { docs: batch }, Endpoint::Earth, Endpoint::Mars, at)
            .expect("shipment scheduled at the current instant");
    }

    /// Puts the reviewer to work if idle: delivery queue first (Earth rank
    /// order), then a local-learner pick from the unjudged cache.
    ///
    /// Called only by the driver after every same-instant cascade has
    /// drained, so at zero link delay the queue is always refilled before
    /// the reviewer chooses — the local learner never preempts Earth order.
    fn try_start(&mut self, kernel: &mut Kernel<Msg>, at: SimTime) {
        if self.done || self.reading.is_some() {
            return;
        }
        while let Some(doc) = self.fifo.pop_front() {
            if self.judged.contains_key(&doc) {
                continue;
            }
            self.begin(kernel, at, doc);
            return;
        }
        let prepared = self.prepared;
        let pick = match self.local.as_mut() {
            Some(local) if !local.pool_is_empty() => {
                local.retrain_if_stale(prepared);
                local.rank(prepared, &BTreeSet::new(), 1).first().copied()
            }
            _ => None,
        };
        if let Some(doc) = pick {
            self.begin(kernel, at, doc);
        }
    }

    fn begin(&mut self, kernel: &mut Kernel<Msg>, at: SimTime, doc: usize) {
        self.reading = Some(doc);
        kernel
            .schedule(at.after(self.prepared.reading_time(doc)), Endpoint::Mars, Msg::Finished { doc })
            .expect("reading finishes in the future");
    }

    fn finish(&mut self, kernel: &mut Kernel<Msg>, at: SimTime, doc: usize) {
        debug_assert_eq!(self.reading, Some(doc), "finished a document not being read");
        self.reading = None;
        let relevant = self.relevant.contains(&doc);
        let prev = self.judged.insert(doc, relevant);
        debug_assert!(prev.is_none(), "document judged twice");
        if let Some(local) = self.local.as_mut() {
            local.label(doc, relevant);
        }
        if relevant {
            self.relevant_found += 1;
        }
        let recall = self.relevant_found as f64 / self.relevant.len() as f64;
        self.points.push(GainPoint { time_s: at.secs(), recall, docs_shipped: self.docs_shipped });
        if self.recall_target.is_some_and(|t| recall >= t) {
            self.done = true;
        }
        kernel
            .transmit(Msg::Judgment { doc, relevant }, Endpoint::Mars, Endpoint::Earth, at)
            .expect("judgment sent at the current instant");
    }
}

/// Runs one topic through one scenario and returns its gain curve.
///
/// Recall is measured against `qrels` over the full corpus in every
/// scenario; judgment entries for documents absent from the corpus are
/// unreachable and excluded from the denominator.
pub fn run_scenario(
    prepared: &PreparedCorpus,
    topic: &TopicDescriptor,
    qrels: &Qrels,
    scenario: &RecallScenario,
    stop: StopRule,
) -> Result<GainCurve, RecallError> {
    let relevant_ids = qrels
        .get(&topic.topic)
        .ok_or_else(|| RecallError::UnknownTopic(topic.topic.clone()))?;
    let relevant: BTreeSet<usize> =
        relevant_ids.iter().filter_map(|id| prepared.index_of(id)).collect();
    if relevant.is_empty() {
        return Err(RecallError::NoRelevantDocs(topic.topic.clone()));
    }

    let with_cache = scenario.kind == ScenarioKind::MarsTarWithCache;
    let cache: BTreeSet<usize> = match (&scenario.cache_seed, with_cache) {
        (None, true) => return Err(RecallError::MissingCacheSeed),
        (Some(_), false) => return Err(RecallError::UnexpectedCacheSeed),
        (Some(ids), true) => ids
            .iter()
            .map(|id| {
                prepared.index_of(id).ok_or_else(|| RecallError::UnknownCacheDoc(id.clone()))
            })
            .collect::<Result<_, _>>()?,
        (None, false) => BTreeSet::new(),
    };

    let link = match scenario.kind {
        ScenarioKind::EarthTar => LinkConfig::from_rtt_secs(0.0),
        _ => scenario.link,
    };
    let watermark = scenario.watermark.unwrap_or(match scenario.kind {
        ScenarioKind::EarthTar | ScenarioKind::EarthTarLatency => 0,
        ScenarioKind::MarsTarNoCache | ScenarioKind::MarsTarWithCache => {
            (link.rtt_s() / MIN_READING_TIME_S).ceil() as usize
        }
    });

    let mut earth =
        CalState::new(&topic.description, prepared.hash_bits(), scenario.cal.clone(), scenario.seed);
    earth.extend_view(0..prepared.len());
    let local = with_cache.then(|| {
        // An independent stream: the local learner's sampling must not
        // perturb Earth's, or scenarios would stop being comparable.
        let mut local = CalState::new(
            &topic.description,
            prepared.hash_bits(),
            scenario.cal.clone(),
            scenario.seed.wrapping_add(1),
        );
        local.extend_view(cache.iter().copied());
        local
    });

    let mut run = Runner {
        prepared,
        relevant,
        cache,
        watermark,
        earth,
        shipped: BTreeSet::new(),
        awaiting: BTreeSet::new(),
        exhausted: false,
        fifo: VecDeque::new(),
        reading: None,
        local,
        judged: BTreeMap::new(),
        points: Vec::new(),
        relevant_found: 0,
        docs_shipped: 0,
        transmitted: 0,
        recall_target: stop.recall_target,
        done: false,
    };

    let mut kernel: Kernel<Msg> = Kernel::new(link);
    kernel
        .transmit(Msg::Query, Endpoint::Mars, Endpoint::Earth, SimTime::ZERO)
        .expect("endpoints are distinct");
    kernel.run_until(SimTime::ZERO, |k, ev| run.handle(k, ev));
    if !run.done {
        run.try_start(&mut kernel, SimTime::ZERO);
    }
    while let Some(t) = kernel.peek_next_at() {
        if stop.time_budget_s.is_some_and(|budget| t.secs() > budget) {
            break;
        }
        kernel.run_until(t, |k, ev| run.handle(k, ev));
        if run.done {
            break;
        }
        run.try_start(&mut kernel, t);
    }

    Ok(GainCurve {
        points: run.points,
        relevant_total: run.relevant.len(),
        judged: run.judged.len(),
        docs_shipped: run.docs_shipped,
        transmitted: run.transmitted,
    })
}
