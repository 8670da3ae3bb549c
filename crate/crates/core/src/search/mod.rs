//! Nearest-scene retrieval.
//!
//! Candidates are every (vehicle, frame) pair whose ego lane matches the
//! query's relative lane, optionally down-sampled per track. Work is
//! sharded by (recording, vehicle): each shard reduces to the vehicle's
//! single closest frame, and shard minima are merged into a bounded table
//! of the N closest vehicles.
//!
//! Pruning: once a table holds N vehicles its worst distance is an upper
//! bound on the final N-th distance, so any frame farther than that can be
//! discarded without changing the result. Workers publish their bound to a
//! shared atomic minimum; reading a stale (larger) bound is always safe.

mod results_file;
mod spread;
mod table;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{
    classify_lane, extract_context_set, fill_points, ContextError, ContextParams, ContextSet, RelativeLane,
    SceneKey, DEFAULT_LAMBDA,
};
use crate::dataset::{Dataset, Recording, Track, VehicleState};
use crate::metric::{kernel, Distance};

pub use results_file::{
    PointRecord, QueryEcho, ResultEntryRecord, ResultsFile, ResultsFileError, StatsRecord,
    RESULTS_SCHEMA, RESULTS_VERSION,
};
pub use spread::{spread_report, AxisStats, ContextSpread};
pub use table::TopTable;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("query scene {0} has no surrounding vehicles")]
    EmptyContext(SceneKey),
    #[error("no candidate scenes in lane {0}")]
    NoCandidates(RelativeLane),
    #[error("recording {0} is not loaded")]
    UnknownRecording(u32),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub example: SceneKey,
    pub lambda: f64,
    pub top_n: usize,
    pub frame_stride: u32,
    pub include_ego: bool,
    pub exclude_query_vehicle: bool,
}

impl SearchQuery {
    pub fn new(example: SceneKey) -> Self {
        SearchQuery {
            example,
            lambda: DEFAULT_LAMBDA,
            top_n: 250,
            frame_stride: 1,
            include_ego: false,
            exclude_query_vehicle: false,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.top_n == 0 {
            return Err(SearchError::InvalidQuery("top_n must be at least 1".into()));
        }
        if self.frame_stride == 0 {
            return Err(SearchError::InvalidQuery("frame stride must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SearchError::InvalidQuery(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    /// Worker threads; `None` uses the available parallelism, `Some(1)` runs inline.
    pub threads: Option<usize>,
    /// Compute every distance in full instead of pruning against the running bound.
    pub exhaustive: bool,
    pub overrides: crate::context::LaneOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub key: SceneKey,
    pub distance: Distance,
}

impl SearchEntry {
    fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .cmp(&other.distance)
            .then(self.key.cmp(&other.key))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateCounts {
    /// (vehicle, frame) pairs visited after down-sampling.
    pub enumerated: u64,
    /// Of those, pairs in the query's relative lane.
    pub after_lane_filter: u64,
    /// Lane-matching pairs dropped because their context set is empty.
    pub skipped_empty_context: u64,
}

impl CandidateCounts {
    pub fn candidates(&self) -> u64 {
        self.after_lane_filter - self.skipped_empty_context
    }

    fn add(&mut self, o: &CandidateCounts) {
        self.enumerated += o.enumerated;
        self.after_lane_filter += o.after_lane_filter;
        self.skipped_empty_context += o.skipped_empty_context;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidates_enumerated: u64,
    pub candidates_after_lane_filter: u64,
    pub skipped_empty_context: u64,
    pub distances_computed: u64,
    /// Distances abandoned early against the running bound; schedule-dependent.
    pub pruned: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub query: SearchQuery,
    pub query_set: ContextSet,
    pub entries: Vec<SearchEntry>,
    pub stats: SearchStats,
}

/// Calls `visit` for every candidate frame of one track and updates `counts`.
fn scan_track<'r>(
    recording: &'r Recording,
    track: &'r Track,
    lane: RelativeLane,
    stride: u32,
    params: &ContextParams,
    counts: &mut CandidateCounts,
    mut visit: impl FnMut(&'r VehicleState),
) {
    let dir = track.meta.driving_direction;
    let mut memo: Option<(i32, bool)> = None;
    for state in track.states.iter().step_by(stride as usize) {
        counts.enumerated += 1;
        let matches = match memo {
            Some((id, m)) if id == state.lane_id => m,
            _ => {
                let m = classify_lane(recording, dir, state.lane_id, &params.overrides) == Some(lane);
                memo = Some((state.lane_id, m));
                m
            }
        };
        if !matches {
            continue;
        }
        counts.after_lane_filter += 1;
        if state.surroundings.is_empty() && !params.include_ego {
            counts.skipped_empty_context += 1;
            continue;
        }
        visit(state);
    }
}

/// Every scene in `lane`, visiting frames `initial_frame, initial_frame + stride, ...`.
///
/// Scenes whose context set would be empty are counted and skipped.
pub fn enumerate_candidates(
    dataset: &Dataset,
    lane: RelativeLane,
    stride: u32,
    params: &ContextParams,
) -> (Vec<SceneKey>, CandidateCounts) {
    let mut counts = CandidateCounts::default();
    let mut keys = Vec::new();
    for rec in dataset.recordings() {
        for track in rec.tracks() {
            scan_track(rec, track, lane, stride.max(1), params, &mut counts, |s| {
                keys.push(SceneKey::new(rec.id(), s.vehicle_id, s.frame))
            });
        }
    }
    (keys, counts)
}

/// Candidate counts without materializing the keys.
pub fn count_candidates(
    dataset: &Dataset,
    lane: RelativeLane,
    stride: u32,
    params: &ContextParams,
) -> CandidateCounts {
    dataset
        .recordings()
        .par_iter()
        .flat_map_iter(|rec| rec.tracks().map(move |t| (rec, t)))
        .map(|(rec, track)| {
            let mut c = CandidateCounts::default();
            scan_track(rec, track, lane, stride.max(1), params, &mut c, |_| {});
            c
        })
        .reduce(CandidateCounts::default, |mut a, b| {
            a.add(&b);
            a
        })
}

/// Resolves the query scene into its context set and relative lane.
pub fn query_context(
    dataset: &Dataset,
    query: &SearchQuery,
    params: &ContextParams,
) -> Result<ContextSet, SearchError> {
    let rec = dataset
        .recording(query.example.recording_id)
        .ok_or(SearchError::UnknownRecording(query.example.recording_id))?;
    match extract_context_set(rec, query.example, params) {
        Ok(set) => Ok(set),
        Err(ContextError::EmptyContext(k)) => Err(SearchError::EmptyContext(k)),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn context_params(query: &SearchQuery, options: &SearchOptions) -> ContextParams {
    ContextParams {
        lambda: query.lambda,
        include_ego: query.include_ego,
        overrides: options.overrides.clone(),
    }
}

struct Worker {
    table: TopTable,
    counts: CandidateCounts,
    computed: u64,
    pruned: u64,
}

impl Worker {
    fn new(n: usize) -> Self {
        Worker {
            table: TopTable::new(n),
            counts: CandidateCounts::default(),
            computed: 0,
            pruned: 0,
        }
    }

    fn merge(mut self, other: Worker) -> Worker {
        self.table.merge(other.table);
        self.counts.add(&other.counts);
        self.computed += other.computed;
        self.pruned += other.pruned;
        self
    }
}

struct Shared<'a> {
    query_set: &'a ContextSet,
    lane: RelativeLane,
    stride: u32,
    params: &'a ContextParams,
    exhaustive: bool,
    bound: AtomicU64,
}

impl Shared<'_> {
    fn bound(&self) -> f64 {
        f64::from_bits(self.bound.load(Ordering::Relaxed))
    }

    fn publish(&self, worst: Distance) {
        // non-negative floats order like their bit patterns
        self.bound.fetch_min(worst.value().to_bits(), Ordering::Relaxed);
    }

    /// Reduces one vehicle to its closest frame and folds it into `w`.
    fn process(&self, w: &mut Worker, rec: &Recording, track: &Track) {
        let mut best: Option<SearchEntry> = None;
        let mut states: Vec<&VehicleState> = Vec::new();
        scan_track(rec, track, self.lane, self.stride, self.params, &mut w.counts, |s| states.push(s));
        let dir = track.meta.driving_direction;
        let mut points = Vec::with_capacity(9);
        for state in states {
            let key = SceneKey::new(rec.id(), state.vehicle_id, state.frame);
            points.clear();
            fill_points(rec, state, dir, self.params, &mut points)
                .expect("loaded recordings have consistent neighbours");
            w.computed += 1;
            let d = if self.exhaustive {
                Some(kernel::hausdorff(&self.query_set.points, &points))
            } else {
                let mut cutoff = self.bound();
                if let Some(worst) = w.table.worst() {
                    cutoff = cutoff.min(worst.value());
                }
                if let Some(b) = best {
                    cutoff = cutoff.min(b.distance.value());
                }
                kernel::bounded(&self.query_set.points, &points, cutoff)
            };
            match d {
                // strict: equal distances keep the earlier frame
                Some(d) if best.is_none_or(|b| d < b.distance.value()) => {
                    best = Some(SearchEntry {
                        key,
                        distance: Distance::new(d),
                    });
                }
                Some(_) => {}
                None => w.pruned += 1,
            }
        }
        if let Some(b) = best {
            w.table.insert(b);
            if !self.exhaustive {
                if let Some(worst) = w.table.worst() {
                    self.publish(worst);
                }
            }
        }
    }
}

/// Runs a query; entries are identical for any thread count and with or
/// without pruning.
pub fn search(
    dataset: &Dataset,
    query: &SearchQuery,
    options: &SearchOptions,
) -> Result<SearchResult, SearchError> {
    let started = Instant::now();
    query.validate()?;
    let params = context_params(query, options);
    let query_set = query_context(dataset, query, &params)?;

    let shards: Vec<(&Recording, &Track)> = dataset
        .recordings()
        .iter()
        .flat_map(|rec| rec.tracks().map(move |t| (rec, t)))
        .filter(|(rec, t)| {
            !(query.exclude_query_vehicle
                && rec.id() == query.example.recording_id
                && t.meta.vehicle_id == query.example.ego_id)
        })
        .collect();

    let shared = Shared {
        query_set: &query_set,
        lane: query_set.relative_lane,
        stride: query.frame_stride,
        params: &params,
        exhaustive: options.exhaustive,
        bound: AtomicU64::new(f64::INFINITY.to_bits()),
    };

    let threads = options
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let worker = if threads <= 1 {
        let mut w = Worker::new(query.top_n);
        for (rec, track) in &shards {
            shared.process(&mut w, rec, track);
        }
        w
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SearchError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            shards
                .par_iter()
                .fold(
                    || Worker::new(query.top_n),
                    |mut w, (rec, track)| {
                        shared.process(&mut w, rec, track);
                        w
                    },
                )
                .reduce(|| Worker::new(query.top_n), Worker::merge)
        })
    };

    if worker.counts.candidates() == 0 {
        return Err(SearchError::NoCandidates(query_set.relative_lane));
    }
    let stats = SearchStats {
        candidates_enumerated: worker.counts.enumerated,
        candidates_after_lane_filter: worker.counts.after_lane_filter,
        skipped_empty_context: worker.counts.skipped_empty_context,
        distances_computed: worker.computed,
        pruned: worker.pruned,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(SearchResult {
        query: query.clone(),
        query_set,
        entries: worker.table.into_entries(),
        stats,
    })
}

/// Exhaustive single-threaded reference: every distance in full.
pub fn search_exhaustive(
    dataset: &Dataset,
    query: &SearchQuery,
    overrides: &crate::context::LaneOverrides,
) -> Result<SearchResult, SearchError> {
    search(
        dataset,
        query,
        &SearchOptions {
            threads: Some(1),
            exhaustive: true,
            overrides: overrides.clone(),
        },
    )
}

/// Re-extracts the context sets of result entries, in rank order.
pub fn resolve_sets(
    dataset: &Dataset,
    keys: impl IntoIterator<Item = SceneKey>,
    params: &ContextParams,
) -> Result<Vec<ContextSet>, SearchError> {
    keys.into_iter()
        .map(|k| {
            let rec = dataset
                .recording(k.recording_id)
                .ok_or(SearchError::UnknownRecording(k.recording_id))?;
            Ok(extract_context_set(rec, k, params)?)
        })
        .collect()
}

/// Violations of the result invariants: ordering, size, one entry per
/// vehicle, and lane agreement with the query.
pub fn verify_result(
    dataset: &Dataset,
    result: &SearchResult,
    overrides: &crate::context::LaneOverrides,
) -> Vec<String> {
    let mut out = Vec::new();
    if result.entries.len() > result.query.top_n {
        out.push(format!(
            "{} entries exceed top_n {}",
            result.entries.len(),
            result.query.top_n
        ));
    }
    for w in result.entries.windows(2) {
        if w[0].rank_cmp(&w[1]) != std::cmp::Ordering::Less {
            out.push(format!("entries {} and {} out of order", w[0].key, w[1].key));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &result.entries {
        if !seen.insert((e.key.recording_id, e.key.ego_id)) {
            out.push(format!(
                "vehicle {} of recording {} appears twice",
                e.key.ego_id, e.key.recording_id
            ));
        }
        let lane = dataset
            .recording(e.key.recording_id)
            .ok_or(ContextError::UnknownScene(e.key))
            .and_then(|r| crate::context::relative_lane(r, e.key.ego_id, e.key.frame, overrides));
        if lane.as_ref() != Ok(&result.query_set.relative_lane) {
            out.push(format!(
                "{} lane {lane:?} differs from query lane {}",
                e.key, result.query_set.relative_lane
            ));
        }
        if (e.key.frame as i64 - frame_offset(dataset, e.key)) % result.query.frame_stride as i64 != 0 {
            out.push(format!("{} is off the frame stride", e.key));
        }
    }
    out
}

fn frame_offset(dataset: &Dataset, key: SceneKey) -> i64 {
    dataset
        .recording(key.recording_id)
        .and_then(|r| r.track_meta(key.ego_id))
        .map_or(key.frame as i64, |m| m.initial_frame as i64)
}

#[cfg(test)]
mod tests;
