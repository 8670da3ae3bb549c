//! Driver responses to retrieved scenes.
//!
//! A response is the ego trajectory from the scene frame onward, expressed
//! relative to where the ego was: longitudinal position from its starting
//! centre, lateral position from the centre of the lane it started in
//! (positive to the left), both along the canonical travel axes.

mod density;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::SceneKey;
use crate::dataset::Dataset;

pub use density::{estimate_density, silverman_bandwidth, uniform_grid, KernelDensity};

pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_SNAPSHOTS: [f64; 3] = [1.0, 2.0, 3.0];
/// Lane-change threshold as a fraction of the origin lane width.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ResponseError {
    #[error("unknown scene {0}")]
    UnknownScene(SceneKey),
    #[error("scene {0}: ego lane is outside the lane layout")]
    UnclassifiableLane(SceneKey),
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("all values identical; bandwidth would be zero")]
    DegenerateSample,
    #[error("bad evaluation grid: {0}")]
    BadGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TacticalLabel {
    LaneKeep,
    LaneChangeLeft,
    LaneChangeRight,
    Truncated,
}

impl TacticalLabel {
    pub fn is_lane_change(self) -> bool {
        matches!(self, Self::LaneChangeLeft | Self::LaneChangeRight)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LaneKeep => "LaneKeep",
            Self::LaneChangeLeft => "LaneChangeLeft",
            Self::LaneChangeRight => "LaneChangeRight",
            Self::Truncated => "Truncated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    /// Seconds since the scene frame.
    pub t: f64,
    pub long_pos: f64,
    pub lat_pos: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTrajectory {
    pub key: SceneKey,
    pub samples: Vec<ResponseSample>,
    pub horizon: f64,
    /// Width of the lane the ego started in.
    pub lane_width: f64,
    /// Classification over the available samples; never `Truncated`.
    pub maneuver: TacticalLabel,
    /// The track ended before the horizon.
    pub truncated: bool,
}

impl ResponseTrajectory {
    /// `Truncated` for short tracks, otherwise the manoeuvre.
    pub fn tactical_label(&self) -> TacticalLabel {
        if self.truncated {
            TacticalLabel::Truncated
        } else {
            self.maneuver
        }
    }

    pub fn max_abs_lat(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.lat_pos.abs()))
    }

    /// Every `step`-th sample, starting with the first.
    pub fn downsampled(&self, step: usize) -> ResponseTrajectory {
        let samples: Vec<_> = self.samples.iter().step_by(step.max(1)).copied().collect();
        let mut out = ResponseTrajectory {
            samples,
            ..self.clone()
        };
        out.maneuver = classify_tactical(&out, out.lane_width);
        out
    }

    /// Sample closest to time `t`, if one lies within half a sample period.
    pub fn sample_at(&self, t: f64) -> Option<&ResponseSample> {
        let dt = match self.samples.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => return self.samples.first().filter(|s| s.t == t),
        };
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|s| (s.t - t).abs() <= dt / 2.0 + 1e-9)
    }
}

/// First sample beyond `±threshold` and the side it crossed to.
pub fn first_crossing(trajectory: &ResponseTrajectory, threshold: f64) -> Option<(f64, TacticalLabel)> {
    trajectory.samples.iter().find_map(|s| {
        if s.lat_pos > threshold {
            Some((s.t, TacticalLabel::LaneChangeLeft))
        } else if s.lat_pos < -threshold {
            Some((s.t, TacticalLabel::LaneChangeRight))
        } else {
            None
        }
    })
}

/// Lane change once the lateral offset passes `threshold` metres either way;
/// the first crossing decides the side.
pub fn classify_with_threshold(trajectory: &ResponseTrajectory, threshold: f64) -> TacticalLabel {
    first_crossing(trajectory, threshold).map_or(TacticalLabel::LaneKeep, |(_, l)| l)
}

/// Classification at half the lane width.
pub fn classify_tactical(trajectory: &ResponseTrajectory, lane_width: f64) -> TacticalLabel {
    classify_with_threshold(trajectory, lane_width * DEFAULT_THRESHOLD_FRACTION)
}

/// Trajectories following each scene, sampled at the native frame rate up
/// to `horizon` seconds or the end of the track.
pub fn extract_responses(
    dataset: &Dataset,
    keys: &[SceneKey],
    horizon: f64,
) -> Result<Vec<ResponseTrajectory>, ResponseError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ResponseError::InvalidHorizon(horizon));
    }
    keys.iter().map(|k| extract_one(dataset, *k, horizon)).collect()
}

fn extract_one(dataset: &Dataset, key: SceneKey, horizon: f64) -> Result<ResponseTrajectory, ResponseError> {
    let rec = dataset
        .recording(key.recording_id)
        .ok_or(ResponseError::UnknownScene(key))?;
    let track = rec.track(key.ego_id).ok_or(ResponseError::UnknownScene(key))?;
    let start = track.state(key.frame).ok_or(ResponseError::UnknownScene(key))?;
    let (_, top, bottom) = rec
        .meta()
        .lane_bounds(start.lane_id)
        .ok_or(ResponseError::UnclassifiableLane(key))?;
    let lane_center = (top + bottom) / 2.0;
    let dir = track.meta.driving_direction;
    let (fwd, left) = (dir.forward_sign(), dir.left_sign());
    let fps = rec.meta().frame_rate;

    let wanted = key.frame + (horizon * fps).round() as u32;
    let last = wanted.min(track.meta.final_frame);
    let samples = (key.frame..=last)
        .map(|f| {
            let s = track.state(f).expect("frame within track");
            ResponseSample {
                t: (f - key.frame) as f64 / fps,
                long_pos: fwd * (s.center_x - start.center_x),
                lat_pos: left * (s.center_y - lane_center),
                speed: s.x_velocity.hypot(s.y_velocity),
            }
        })
        .collect();
    let mut out = ResponseTrajectory {
        key,
        samples,
        horizon,
        lane_width: bottom - top,
        maneuver: TacticalLabel::LaneKeep,
        truncated: last < wanted,
    };
    out.maneuver = classify_tactical(&out, out.lane_width);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    Longitudinal,
    Lateral,
}

/// Density of one axis at one time offset across all responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDistribution {
    pub t: f64,
    pub axis: Axis,
    pub samples: usize,
    pub bandwidth: f64,
    pub evaluation_grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Values of `axis` at time `t`, from every response that reaches it.
pub fn snapshot_values(trajectories: &[ResponseTrajectory], t: f64, axis: Axis) -> Vec<f64> {
    trajectories
        .iter()
        .filter_map(|tr| tr.sample_at(t))
        .map(|s| match axis {
            Axis::Longitudinal => s.long_pos,
            Axis::Lateral => s.lat_pos,
        })
        .collect()
}

/// Density estimate for one snapshot on a grid spanning the data ± 3 bandwidths.
pub fn behavior_distribution(
    trajectories: &[ResponseTrajectory],
    t: f64,
    axis: Axis,
    grid_points: usize,
) -> Result<BehaviorDistribution, ResponseError> {
    let values = snapshot_values(trajectories, t, axis);
    let h = silverman_bandwidth(&values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let kde = estimate_density(&values, &uniform_grid(lo, hi, grid_points))?;
    Ok(BehaviorDistribution {
        t,
        axis,
        samples: values.len(),
        bandwidth: kde.bandwidth,
        evaluation_grid: kde.grid,
        density: kde.density,
    })
}

/// Counts of `tactical_label()` plus, under `"lane_changes"`, all lane
/// changes including truncated ones.
pub fn label_counts(trajectories: &[ResponseTrajectory]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for l in [
        TacticalLabel::LaneKeep,
        TacticalLabel::LaneChangeLeft,
        TacticalLabel::LaneChangeRight,
        TacticalLabel::Truncated,
    ] {
        out.insert(l.as_str().to_string(), 0);
    }
    let mut changes = 0;
    for t in trajectories {
        *out.entry(t.tactical_label().as_str().to_string()).or_default() += 1;
        changes += t.maneuver.is_lane_change() as usize;
    }
    out.insert("lane_changes".into(), changes);
    out
}

/// One row per sample: `recording,ego,frame0,t,long_pos,lat_pos,speed,label,maneuver`.
pub fn write_responses_csv<W: Write>(out: W, trajectories: &[ResponseTrajectory]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "recording", "ego", "frame0", "t", "long_pos", "lat_pos", "speed", "label", "maneuver",
    ])?;
    for tr in trajectories {
        let label = tr.tactical_label().as_str();
        for s in &tr.samples {
            w.write_record([
                tr.key.recording_id.to_string(),
                tr.key.ego_id.to_string(),
                tr.key.frame.to_string(),
                s.t.to_string(),
                s.long_pos.to_string(),
                s.lat_pos.to_string(),
                s.speed.to_string(),
                label.to_string(),
                tr.maneuver.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
