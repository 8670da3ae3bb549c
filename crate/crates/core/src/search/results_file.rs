//! Versioned JSON document holding one search result.
//!
//! Everything in the file is a function of the data and the query, so two
//! runs of the same search produce byte-identical files. Timing and other
//! schedule-dependent figures belong in the run manifest instead.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SearchQuery, SearchResult};
use crate::context::{ContextPoint, ContextSet, RelativeLane, SceneKey};

pub const RESULTS_SCHEMA: &str = "scenematch/search-result";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ResultsFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEcho {
    pub recording: u32,
    pub ego: u32,
    pub frame: u32,
    pub lambda: f64,
    pub top_n: usize,
    pub frame_stride: u32,
    pub include_ego: bool,
    pub exclude_query_vehicle: bool,
    pub relative_lane: RelativeLane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRecord {
    pub candidates_enumerated: u64,
    pub candidates_after_lane_filter: u64,
    pub skipped_empty_context: u64,
    pub distances_computed: u64,
}

/// One context point, unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub vehicle: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEntryRecord {
    pub rank: usize,
    pub recording: u32,
    pub ego: u32,
    pub frame: u32,
    pub distance: f64,
    pub context_points: Vec<PointRecord>,
}

impl ResultEntryRecord {
    pub fn key(&self) -> SceneKey {
        SceneKey::new(self.recording, self.ego, self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub schema: String,
    pub version: u32,
    pub query: QueryEcho,
    pub query_context: Vec<PointRecord>,
    pub stats: StatsRecord,
    pub entries: Vec<ResultEntryRecord>,
}

fn points(set: &ContextSet) -> Vec<PointRecord> {
    set.points.iter().map(PointRecord::from).collect()
}

impl From<&ContextPoint> for PointRecord {
    fn from(p: &ContextPoint) -> Self {
        PointRecord {
            vehicle: p.source_vehicle_id,
            x: p.x,
            y: p.y,
            vx: p.vx,
            vy: p.vy,
        }
    }
}

impl ResultsFile {
    /// `sets[i]` must be the context set of `result.entries[i]`.
    pub fn new(result: &SearchResult, sets: &[ContextSet]) -> Self {
        let q: &SearchQuery = &result.query;
        ResultsFile {
            schema: RESULTS_SCHEMA.into(),
            version: RESULTS_VERSION,
            query: QueryEcho {
                recording: q.example.recording_id,
                ego: q.example.ego_id,
                frame: q.example.frame,
                lambda: q.lambda,
                top_n: q.top_n,
                frame_stride: q.frame_stride,
                include_ego: q.include_ego,
                exclude_query_vehicle: q.exclude_query_vehicle,
                relative_lane: result.query_set.relative_lane,
            },
            query_context: points(&result.query_set),
            stats: StatsRecord {
                candidates_enumerated: result.stats.candidates_enumerated,
                candidates_after_lane_filter: result.stats.candidates_after_lane_filter,
                skipped_empty_context: result.stats.skipped_empty_context,
                distances_computed: result.stats.distances_computed,
            },
            entries: result
                .entries
                .iter()
                .zip(sets)
                .enumerate()
                .map(|(i, (e, set))| ResultEntryRecord {
                    rank: i + 1,
                    recording: e.key.recording_id,
                    ego: e.key.ego_id,
                    frame: e.key.frame,
                    distance: e.distance.value(),
                    context_points: points(set),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// Parses and checks schema name, version, non-emptiness, and rank order.
    pub fn from_json(text: &str) -> Result<Self, ResultsFileError> {
        let f: ResultsFile = serde_json::from_str(text)
            .map_err(|e| ResultsFileError::Schema(format!("not a results document: {e}")))?;
        if f.schema != RESULTS_SCHEMA {
            return Err(ResultsFileError::Schema(format!("unexpected schema {:?}", f.schema)));
        }
        if f.version != RESULTS_VERSION {
            return Err(ResultsFileError::Schema(format!("unsupported version {}", f.version)));
        }
        if f.entries.is_empty() {
            return Err(ResultsFileError::Schema("results contain no entries".into()));
        }
        for (i, e) in f.entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(ResultsFileError::Schema(format!("entry {i} has rank {}", e.rank)));
            }
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self, ResultsFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ResultsFileError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultsFile {
        ResultsFile {
            schema: RESULTS_SCHEMA.into(),
            version: RESULTS_VERSION,
            query: QueryEcho {
                recording: 1,
                ego: 21,
                frame: 379,
                lambda: 10.0,
                top_n: 1,
                frame_stride: 1,
                include_ego: false,
                exclude_query_vehicle: false,
                relative_lane: RelativeLane::Right,
            },
            query_context: vec![PointRecord { vehicle: 20, x: 30.0, y: 0.0, vx: 25.0, vy: 0.0 }],
            stats: StatsRecord {
                candidates_enumerated: 10,
                candidates_after_lane_filter: 5,
                skipped_empty_context: 1,
                distances_computed: 4,
            },
            entries: vec![ResultEntryRecord {
                rank: 1,
                recording: 1,
                ego: 21,
                frame: 379,
                distance: 0.0,
                context_points: vec![],
            }],
        }
    }

    #[test]
    fn round_trips() {
        let f = sample();
        assert_eq!(ResultsFile::from_json(&f.to_json()).unwrap(), f);
    }

    #[test]
    fn rejects_empty_wrong_version_and_garbage() {
        let mut f = sample();
        f.entries.clear();
        assert!(ResultsFile::from_json(&f.to_json()).is_err());
        let mut f = sample();
        f.version = 99;
        assert!(ResultsFile::from_json(&f.to_json()).is_err());
        assert!(ResultsFile::from_json("").is_err());
        assert!(ResultsFile::from_json("{\"entries\": []}").is_err());
    }
}
