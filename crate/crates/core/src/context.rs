//! Ego-frame context sets.
//!
//! A scene is converted into one 4-D point per surrounding vehicle:
//! `[x, λ·y, vx, λ·vy]`, where `(x, y)` is the neighbour's centre relative
//! to the ego centre and `(vx, vy)` its absolute velocity, both expressed
//! along the canonical ego axes (x forward along the direction of travel,
//! y toward the driver's left). Both carriageways therefore map onto the
//! same frame.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DrivingDirection, Frame, Recording, VehicleId, VehicleState};

pub const DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("unknown scene {0}")]
    UnknownScene(SceneKey),
    #[error("scene {0} has no surrounding vehicles")]
    EmptyContext(SceneKey),
    #[error("vehicle {vehicle_id} at frame {frame}: lane {lane_id} is outside the lane layout")]
    UnclassifiableLane {
        vehicle_id: VehicleId,
        frame: Frame,
        lane_id: i32,
    },
    #[error("lateral scale must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("lane override line {line}: {message}")]
    BadOverride { line: usize, message: String },
}

/// One traffic scene: an ego vehicle at one frame of one recording.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct SceneKey {
    pub recording_id: u32,
    pub ego_id: VehicleId,
    pub frame: Frame,
}

impl SceneKey {
    pub fn new(recording_id: u32, ego_id: VehicleId, frame: Frame) -> Self {
        SceneKey {
            recording_id,
            ego_id,
            frame,
        }
    }
}

impl fmt::Display for SceneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(recording {}, ego {}, frame {})",
            self.recording_id, self.ego_id, self.frame
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelativeLane {
    Left,
    Center,
    Right,
    Merging,
}

impl FromStr for RelativeLane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Self::Left),
            "center" | "centre" => Ok(Self::Center),
            "right" => Ok(Self::Right),
            "merging" | "merge" => Ok(Self::Merging),
            other => Err(format!("unknown relative lane {other:?}")),
        }
    }
}

impl fmt::Display for RelativeLane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Per-location lane classifications that take precedence over the
/// marking-derived rule.
///
/// Text format, one entry per line: `location_id lane_id relative_lane`,
/// separated by whitespace or commas; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaneOverrides {
    entries: BTreeMap<(u32, i32), RelativeLane>,
}

impl LaneOverrides {
    pub fn parse(text: &str) -> Result<Self, ContextError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| ContextError::BadOverride {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let [loc, lane, class] = fields[..] else {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            };
            let loc = loc.parse().map_err(|e| bad(format!("location id: {e}")))?;
            let lane = lane.parse().map_err(|e| bad(format!("lane id: {e}")))?;
            let class = class.parse().map_err(bad)?;
            entries.insert((loc, lane), class);
        }
        Ok(LaneOverrides { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ContextError> {
        let text = std::fs::read_to_string(path).map_err(|e| ContextError::BadOverride {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, location_id: u32, lane_id: i32, lane: RelativeLane) {
        self.entries.insert((location_id, lane_id), lane);
    }

    pub fn get(&self, location_id: u32, lane_id: i32) -> Option<RelativeLane> {
        self.entries.get(&(location_id, lane_id)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Classifies the lane of `vehicle_id` at `frame` within its carriageway.
///
/// Overrides win. Otherwise lanes are ranked from the median outward,
/// skipping lanes overridden as `Merging`: the first is `Left`, the last
/// `Right`, anything between `Center`. A single through lane is `Right`.
pub fn relative_lane(
    recording: &Recording,
    vehicle_id: VehicleId,
    frame: Frame,
    overrides: &LaneOverrides,
) -> Result<RelativeLane, ContextError> {
    let key = SceneKey::new(recording.id(), vehicle_id, frame);
    let state = recording
        .state(vehicle_id, frame)
        .ok_or(ContextError::UnknownScene(key))?;
    let tm = recording.track_meta(vehicle_id).expect("state implies track");
    classify_lane(recording, tm.driving_direction, state.lane_id, overrides).ok_or(
        ContextError::UnclassifiableLane {
            vehicle_id,
            frame,
            lane_id: state.lane_id,
        },
    )
}

pub(crate) fn classify_lane(
    recording: &Recording,
    direction: DrivingDirection,
    lane_id: i32,
    overrides: &LaneOverrides,
) -> Option<RelativeLane> {
    let meta = recording.meta();
    let lanes = meta.lanes_from_median(direction);
    if !lanes.contains(&lane_id) {
        return None;
    }
    if let Some(lane) = overrides.get(meta.location_id, lane_id) {
        return Some(lane);
    }
    let through: Vec<i32> = lanes
        .into_iter()
        .filter(|l| overrides.get(meta.location_id, *l) != Some(RelativeLane::Merging))
        .collect();
    let pos = through.iter().position(|l| *l == lane_id)?;
    Some(if pos + 1 == through.len() {
        RelativeLane::Right
    } else if pos == 0 {
        RelativeLane::Left
    } else {
        RelativeLane::Center
    })
}

/// One surrounding vehicle in the canonical ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextPoint {
    /// Longitudinal centre offset (m), positive ahead of the ego.
    pub x: f64,
    /// Lateral centre offset (m), positive toward the ego's left.
    pub y: f64,
    /// Absolute velocity along the ego's travel axis (m/s).
    pub vx: f64,
    /// Absolute lateral velocity (m/s), positive toward the ego's left.
    pub vy: f64,
    /// `λ·y`
    pub y_scaled: f64,
    /// `λ·vy`
    pub vy_scaled: f64,
    pub source_vehicle_id: VehicleId,
}

impl ContextPoint {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, lambda: f64, source_vehicle_id: VehicleId) -> Self {
        ContextPoint {
            x,
            y,
            vx,
            vy,
            y_scaled: lambda * y,
            vy_scaled: lambda * vy,
            source_vehicle_id,
        }
    }

    /// The coordinates the distance is computed on.
    #[inline]
    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.y_scaled, self.vx, self.vy_scaled]
    }

    pub fn unscaled(&self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    pub key: SceneKey,
    pub lambda: f64,
    pub points: Vec<ContextPoint>,
    pub relative_lane: RelativeLane,
}

impl ContextSet {
    /// Builds a set from unscaled `[x, y, vx, vy]` rows; provenance ids are `1..`.
    pub fn from_unscaled(
        key: SceneKey,
        lambda: f64,
        relative_lane: RelativeLane,
        rows: &[[f64; 4]],
    ) -> Self {
        let points = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ContextPoint::new(r[0], r[1], r[2], r[3], lambda, i as VehicleId + 1))
            .collect();
        ContextSet {
            key,
            lambda,
            points,
            relative_lane,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same set under a different lateral scale.
    pub fn with_lambda(&self, lambda: f64) -> ContextSet {
        ContextSet {
            key: self.key,
            lambda,
            points: self
                .points
                .iter()
                .map(|p| ContextPoint::new(p.x, p.y, p.vx, p.vy, lambda, p.source_vehicle_id))
                .collect(),
            relative_lane: self.relative_lane,
        }
    }
}

/// Options shared by every extraction in a search.
#[derive(Debug, Clone)]
pub struct ContextParams {
    pub lambda: f64,
    pub include_ego: bool,
    pub overrides: LaneOverrides,
}

impl Default for ContextParams {
    fn default() -> Self {
        ContextParams {
            lambda: DEFAULT_LAMBDA,
            include_ego: false,
            overrides: LaneOverrides::default(),
        }
    }
}

/// Converts the scene `key` into its context set.
///
/// One point per occupied neighbour slot, in slot order; with `include_ego`
/// the ego itself is appended at the origin with its own velocity.
pub fn extract_context_set(
    recording: &Recording,
    key: SceneKey,
    params: &ContextParams,
) -> Result<ContextSet, ContextError> {
    let lambda = params.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ContextError::InvalidLambda(lambda));
    }
    if key.recording_id != recording.id() {
        return Err(ContextError::UnknownScene(key));
    }
    let ego = recording
        .state(key.ego_id, key.frame)
        .ok_or(ContextError::UnknownScene(key))?;
    let relative_lane = relative_lane(recording, key.ego_id, key.frame, &params.overrides)?;
    let dir = recording
        .track_meta(key.ego_id)
        .expect("state implies track")
        .driving_direction;
    let mut points = Vec::with_capacity(ego.surroundings.count() + params.include_ego as usize);
    fill_points(recording, ego, dir, params, &mut points)?;
    if points.is_empty() {
        return Err(ContextError::EmptyContext(key));
    }
    Ok(ContextSet {
        key,
        lambda,
        points,
        relative_lane,
    })
}

/// Appends the context points of `ego` to `out`, without lane classification.
pub(crate) fn fill_points(
    recording: &Recording,
    ego: &VehicleState,
    dir: DrivingDirection,
    params: &ContextParams,
    out: &mut Vec<ContextPoint>,
) -> Result<(), ContextError> {
    let lambda = params.lambda;
    let (fwd, left) = (dir.forward_sign(), dir.left_sign());
    for (_, id) in ego.surroundings.iter() {
        let other = recording
            .state(id, ego.frame)
            .ok_or(ContextError::UnknownScene(SceneKey::new(recording.id(), id, ego.frame)))?;
        out.push(ContextPoint::new(
            fwd * (other.center_x - ego.center_x),
            left * (other.center_y - ego.center_y),
            fwd * other.x_velocity,
            left * other.y_velocity,
            lambda,
            id,
        ));
    }
    if params.include_ego {
        out.push(ContextPoint::new(
            0.0,
            0.0,
            fwd * ego.x_velocity,
            left * ego.y_velocity,
            lambda,
            ego.vehicle_id,
        ));
    }
    Ok(())
}
