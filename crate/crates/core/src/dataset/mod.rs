//! In-memory representation of highD-format recordings.
//!
//! Raw dataset conventions are kept as-is: x grows to the right of the
//! aerial image, y grows downward, and vehicles on the upper carriageway
//! drive toward negative x. Conversion into an ego-centred frame happens in
//! [`crate::context`].

mod highd;
mod neighbors;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use highd::{
    load_dataset, load_recording, recording_files as highd_files, recording_ids_in, write_recording,
};
pub use neighbors::assign_surroundings;

pub type VehicleId = u32;
pub type Frame = u32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("{file}: row {row}, column `{column}`: {message}")]
    MalformedRow {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("recording {recording_id}: {} inconsistencies, first: {}", .violations.len(), .violations.first().map(String::as_str).unwrap_or(""))]
    InconsistentMeta {
        recording_id: u32,
        violations: Vec<String>,
    },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("no recordings found in {0}")]
    EmptyDataset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// highD `drivingDirection`: 1 = upper carriageway (toward -x), 2 = lower (toward +x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrivingDirection {
    UpperCarriageway,
    LowerCarriageway,
}

impl DrivingDirection {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Self::UpperCarriageway),
            2 => Some(Self::LowerCarriageway),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::UpperCarriageway => 1,
            Self::LowerCarriageway => 2,
        }
    }

    /// Sign that maps raw x onto the direction of travel.
    pub fn forward_sign(self) -> f64 {
        match self {
            Self::UpperCarriageway => -1.0,
            Self::LowerCarriageway => 1.0,
        }
    }

    /// Sign that maps raw y onto the driver's left.
    pub fn left_sign(self) -> f64 {
        match self {
            Self::UpperCarriageway => 1.0,
            Self::LowerCarriageway => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Car => "Car",
            Self::Truck => "Truck",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub recording_id: u32,
    pub frame_rate: f64,
    pub location_id: u32,
    pub upper_lane_markings: Vec<f64>,
    pub lower_lane_markings: Vec<f64>,
    pub duration: f64,
}

impl RecordingMeta {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            out.push(format!("frame rate {} is not positive", self.frame_rate));
        }
        for (name, marks) in [
            ("upperLaneMarkings", &self.upper_lane_markings),
            ("lowerLaneMarkings", &self.lower_lane_markings),
        ] {
            if marks.len() < 2 {
                out.push(format!("{name} needs at least 2 markings, got {}", marks.len()));
            }
            if marks.windows(2).any(|w| !(w[0] < w[1])) {
                out.push(format!("{name} is not strictly increasing"));
            }
        }
        out
    }

    pub fn lanes_in(&self, direction: DrivingDirection) -> usize {
        match direction {
            DrivingDirection::UpperCarriageway => self.upper_lane_markings.len().saturating_sub(1),
            DrivingDirection::LowerCarriageway => self.lower_lane_markings.len().saturating_sub(1),
        }
    }

    /// Lane ids of one carriageway, ordered from the median outward.
    ///
    /// highD numbers lanes top to bottom: id 1 lies above the first upper
    /// marking, the upper lanes follow, then one id for the median, then
    /// the lower lanes.
    pub fn lanes_from_median(&self, direction: DrivingDirection) -> Vec<i32> {
        let upper = self.lanes_in(DrivingDirection::UpperCarriageway) as i32;
        match direction {
            DrivingDirection::UpperCarriageway => (2..=upper + 1).rev().collect(),
            DrivingDirection::LowerCarriageway => {
                let lower = self.lanes_in(DrivingDirection::LowerCarriageway) as i32;
                (upper + 3..=upper + 2 + lower).collect()
            }
        }
    }

    /// Carriageway and raw lateral bounds `(top, bottom)` of a lane id.
    pub fn lane_bounds(&self, lane_id: i32) -> Option<(DrivingDirection, f64, f64)> {
        let upper = self.lanes_in(DrivingDirection::UpperCarriageway) as i32;
        let lower = self.lanes_in(DrivingDirection::LowerCarriageway) as i32;
        if (2..=upper + 1).contains(&lane_id) {
            let i = (lane_id - 2) as usize;
            let m = &self.upper_lane_markings;
            Some((DrivingDirection::UpperCarriageway, m[i], m[i + 1]))
        } else if (upper + 3..=upper + 2 + lower).contains(&lane_id) {
            let i = (lane_id - upper - 3) as usize;
            let m = &self.lower_lane_markings;
            Some((DrivingDirection::LowerCarriageway, m[i], m[i + 1]))
        } else {
            None
        }
    }

    /// Lane id containing raw lateral coordinate `y` on the given carriageway.
    pub fn lane_at(&self, direction: DrivingDirection, y: f64) -> Option<i32> {
        let upper = self.lanes_in(DrivingDirection::UpperCarriageway) as i32;
        let (marks, first_id) = match direction {
            DrivingDirection::UpperCarriageway => (&self.upper_lane_markings, 2),
            DrivingDirection::LowerCarriageway => (&self.lower_lane_markings, upper + 3),
        };
        marks
            .windows(2)
            .position(|w| y >= w[0] && y < w[1])
            .map(|i| first_id + i as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackMeta {
    pub vehicle_id: VehicleId,
    pub recording_id: u32,
    pub initial_frame: Frame,
    pub final_frame: Frame,
    /// Longitudinal extent (m).
    pub width: f64,
    /// Lateral extent (m).
    pub height: f64,
    pub driving_direction: DrivingDirection,
    pub vehicle_class: VehicleClass,
}

impl TrackMeta {
    pub fn num_frames(&self) -> usize {
        (self.final_frame - self.initial_frame) as usize + 1
    }

    pub fn covers(&self, frame: Frame) -> bool {
        (self.initial_frame..=self.final_frame).contains(&frame)
    }
}

/// The eight highD neighbour slots, in file column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Preceding,
    Following,
    LeftPreceding,
    LeftAlongside,
    LeftFollowing,
    RightPreceding,
    RightAlongside,
    RightFollowing,
}

impl Slot {
    pub const ALL: [Slot; 8] = [
        Slot::Preceding,
        Slot::Following,
        Slot::LeftPreceding,
        Slot::LeftAlongside,
        Slot::LeftFollowing,
        Slot::RightPreceding,
        Slot::RightAlongside,
        Slot::RightFollowing,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Slot::Preceding => "precedingId",
            Slot::Following => "followingId",
            Slot::LeftPreceding => "leftPrecedingId",
            Slot::LeftAlongside => "leftAlongsideId",
            Slot::LeftFollowing => "leftFollowingId",
            Slot::RightPreceding => "rightPrecedingId",
            Slot::RightAlongside => "rightAlongsideId",
            Slot::RightFollowing => "rightFollowingId",
        }
    }

    pub fn mirrored(self) -> Slot {
        match self {
            Slot::LeftPreceding => Slot::RightPreceding,
            Slot::LeftAlongside => Slot::RightAlongside,
            Slot::LeftFollowing => Slot::RightFollowing,
            Slot::RightPreceding => Slot::LeftPreceding,
            Slot::RightAlongside => Slot::LeftAlongside,
            Slot::RightFollowing => Slot::LeftFollowing,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Surroundings([Option<VehicleId>; 8]);

impl Surroundings {
    pub fn get(&self, slot: Slot) -> Option<VehicleId> {
        self.0[slot as usize]
    }

    pub fn set(&mut self, slot: Slot, id: Option<VehicleId>) {
        self.0[slot as usize] = id;
    }

    /// Present neighbours in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (Slot, VehicleId)> + '_ {
        Slot::ALL
            .iter()
            .zip(self.0.iter())
            .filter_map(|(s, id)| id.map(|id| (*s, id)))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|id| id.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub vehicle_id: VehicleId,
    pub frame: Frame,
    pub bbox_x: f64,
    pub bbox_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub x_velocity: f64,
    pub y_velocity: f64,
    pub lane_id: i32,
    pub surroundings: Surroundings,
}

impl VehicleState {
    /// Builds a state from the raw top-left corner; centres follow from the track extents.
    pub fn from_bbox(
        meta: &TrackMeta,
        frame: Frame,
        bbox: (f64, f64),
        velocity: (f64, f64),
        lane_id: i32,
    ) -> Self {
        VehicleState {
            vehicle_id: meta.vehicle_id,
            frame,
            bbox_x: bbox.0,
            bbox_y: bbox.1,
            center_x: bbox.0 + meta.width / 2.0,
            center_y: bbox.1 + meta.height / 2.0,
            x_velocity: velocity.0,
            y_velocity: velocity.1,
            lane_id,
            surroundings: Surroundings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub meta: TrackMeta,
    /// `states[i].frame == meta.initial_frame + i`.
    pub states: Vec<VehicleState>,
}

impl Track {
    pub fn state(&self, frame: Frame) -> Option<&VehicleState> {
        if !self.meta.covers(frame) {
            return None;
        }
        self.states.get((frame - self.meta.initial_frame) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    meta: RecordingMeta,
    tracks: BTreeMap<VehicleId, Track>,
}

impl Recording {
    pub fn meta(&self) -> &RecordingMeta {
        &self.meta
    }

    pub fn id(&self) -> u32 {
        self.meta.recording_id
    }

    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn track(&self, vehicle_id: VehicleId) -> Option<&Track> {
        self.tracks.get(&vehicle_id)
    }

    pub fn track_meta(&self, vehicle_id: VehicleId) -> Option<&TrackMeta> {
        self.tracks.get(&vehicle_id).map(|t| &t.meta)
    }

    pub fn state(&self, vehicle_id: VehicleId, frame: Frame) -> Option<&VehicleState> {
        self.tracks.get(&vehicle_id)?.state(frame)
    }

    pub fn num_vehicles(&self) -> usize {
        self.tracks.len()
    }

    pub fn num_states(&self) -> usize {
        self.tracks.values().map(|t| t.states.len()).sum()
    }

    pub fn max_frame(&self) -> Option<Frame> {
        self.tracks.values().map(|t| t.meta.final_frame).max()
    }

    /// Checks every structural invariant, returning human-readable violations.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.meta.validate();
        for (id, track) in &self.tracks {
            let m = &track.meta;
            if m.vehicle_id != *id {
                out.push(format!("track keyed {id} carries id {}", m.vehicle_id));
            }
            if m.final_frame < m.initial_frame {
                out.push(format!("vehicle {id}: finalFrame before initialFrame"));
                continue;
            }
            if !(m.width > 0.0 && m.height > 0.0) {
                out.push(format!("vehicle {id}: non-positive extent"));
            }
            if track.states.len() != m.num_frames() {
                out.push(format!(
                    "vehicle {id}: {} rows for declared range {}..={}",
                    track.states.len(),
                    m.initial_frame,
                    m.final_frame
                ));
            }
            for (i, s) in track.states.iter().enumerate() {
                if s.frame != m.initial_frame + i as Frame {
                    out.push(format!("vehicle {id}: frame {} out of sequence", s.frame));
                    break;
                }
                for v in [s.bbox_x, s.bbox_y, s.x_velocity, s.y_velocity] {
                    if !v.is_finite() {
                        out.push(format!("vehicle {id} frame {}: non-finite value", s.frame));
                    }
                }
                for (slot, other) in s.surroundings.iter() {
                    if other == *id {
                        out.push(format!("vehicle {id} frame {}: {slot:?} refers to itself", s.frame));
                    } else if self.state(other, s.frame).is_none() {
                        out.push(format!(
                            "vehicle {id} frame {}: {slot:?} vehicle {other} not present at that frame",
                            s.frame
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Assembles a [`Recording`] from tracks, validating on [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct RecordingBuilder {
    meta: RecordingMeta,
    tracks: BTreeMap<VehicleId, Track>,
    problems: Vec<String>,
}

impl RecordingBuilder {
    pub fn new(meta: RecordingMeta) -> Self {
        RecordingBuilder {
            meta,
            tracks: BTreeMap::new(),
            problems: Vec::new(),
        }
    }

    pub fn meta(&self) -> &RecordingMeta {
        &self.meta
    }

    pub fn push_track(&mut self, meta: TrackMeta, states: Vec<VehicleState>) -> &mut Self {
        let id = meta.vehicle_id;
        if self.tracks.insert(id, Track { meta, states }).is_some() {
            self.problems.push(format!("duplicate vehicle id {id}"));
        }
        self
    }

    /// Overwrites every neighbour slot using nearest-in-lane rules.
    pub fn assign_surroundings(&mut self) -> &mut Self {
        assign_surroundings(&self.meta, &mut self.tracks);
        self
    }

    pub fn build(self) -> Result<Recording, DatasetError> {
        let rec = Recording {
            meta: self.meta,
            tracks: self.tracks,
        };
        let mut violations = self.problems;
        violations.extend(rec.violations());
        if violations.is_empty() {
            Ok(rec)
        } else {
            Err(DatasetError::InconsistentMeta {
                recording_id: rec.meta.recording_id,
                violations,
            })
        }
    }
}

/// A set of loaded recordings, ordered by recording id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    recordings: Vec<Recording>,
}

impl Dataset {
    pub fn new(mut recordings: Vec<Recording>) -> Self {
        recordings.sort_by_key(|r| r.id());
        Dataset { recordings }
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn recording(&self, id: u32) -> Option<&Recording> {
        self.recordings
            .binary_search_by_key(&id, |r| r.id())
            .ok()
            .map(|i| &self.recordings[i])
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }
}

impl fmt::Display for DrivingDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UpperCarriageway => "upper",
            Self::LowerCarriageway => "lower",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(upper: Vec<f64>, lower: Vec<f64>) -> RecordingMeta {
        RecordingMeta {
            recording_id: 1,
            frame_rate: 25.0,
            location_id: 1,
            upper_lane_markings: upper,
            lower_lane_markings: lower,
            duration: 10.0,
        }
    }

    #[test]
    fn lane_numbering_follows_highd() {
        let m = meta(vec![8.5, 12.6, 16.4], vec![21.0, 25.0, 28.8]);
        assert_eq!(m.lanes_from_median(DrivingDirection::UpperCarriageway), vec![3, 2]);
        assert_eq!(m.lanes_from_median(DrivingDirection::LowerCarriageway), vec![5, 6]);
        assert_eq!(m.lane_bounds(2), Some((DrivingDirection::UpperCarriageway, 8.5, 12.6)));
        assert_eq!(m.lane_bounds(6), Some((DrivingDirection::LowerCarriageway, 25.0, 28.8)));
        assert_eq!(m.lane_bounds(4), None);
        assert_eq!(m.lane_bounds(1), None);
        assert_eq!(m.lane_at(DrivingDirection::LowerCarriageway, 26.0), Some(6));
        assert_eq!(m.lane_at(DrivingDirection::UpperCarriageway, 30.0), None);

        let m3 = meta(vec![1.0, 5.0, 9.0, 13.0], vec![17.0, 21.0, 25.0, 29.0]);
        assert_eq!(m3.lanes_from_median(DrivingDirection::LowerCarriageway), vec![6, 7, 8]);
    }

    #[test]
    fn meta_validation() {
        assert!(meta(vec![1.0, 2.0], vec![3.0, 4.0]).validate().is_empty());
        assert_eq!(meta(vec![1.0], vec![3.0, 3.0]).validate().len(), 2);
        let mut m = meta(vec![1.0, 2.0], vec![3.0, 4.0]);
        m.frame_rate = 0.0;
        assert_eq!(m.validate().len(), 1);
    }

    #[test]
    fn surroundings_iterate_in_slot_order() {
        let mut s = Surroundings::default();
        s.set(Slot::RightFollowing, Some(4));
        s.set(Slot::Preceding, Some(9));
        let got: Vec<_> = s.iter().collect();
        assert_eq!(got, vec![(Slot::Preceding, 9), (Slot::RightFollowing, 4)]);
        assert_eq!(s.count(), 2);
    }
}
