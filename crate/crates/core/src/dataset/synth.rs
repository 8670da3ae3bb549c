//! Deterministic synthetic recordings in the highD schema.
//!
//! Vehicles enter a straight road at a random frame, somewhere in its first
//! quarter, and cruise at a constant speed until they leave the observed section or
//! the recording ends. A configurable share of vehicles performs one
//! scripted lane change with a half-cosine lateral profile, so the marking
//! crossing happens exactly halfway through the manoeuvre.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    write_recording, Dataset, DatasetError, DrivingDirection, Frame, Recording, RecordingBuilder,
    RecordingMeta, TrackMeta, VehicleClass, VehicleId, VehicleState,
};
use crate::dataset::neighbors::adjacent_lane;

const FIRST_MARKING: f64 = 8.0;
const MEDIAN_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub recording_id: u32,
    pub location_id: u32,
    /// Through lanes per carriageway, 2 to 4.
    pub lanes: usize,
    pub vehicles: usize,
    /// Recording length (s).
    pub duration: f64,
    pub frame_rate: f64,
    /// Cruise speed range (m/s), sampled uniformly.
    pub speed_range: (f64, f64),
    /// Probability that a vehicle performs one lane change.
    pub lane_change_probability: f64,
    /// Duration of a scripted lane change (s).
    pub lane_change_duration: f64,
    /// Observed road section (m).
    pub road_length: f64,
    pub lane_width: f64,
    pub truck_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            recording_id: 1,
            location_id: 1,
            lanes: 2,
            vehicles: 100,
            duration: 60.0,
            frame_rate: 25.0,
            speed_range: (22.0, 38.0),
            lane_change_probability: 0.2,
            lane_change_duration: 4.0,
            road_length: 420.0,
            lane_width: 3.9,
            truck_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if !(2..=4).contains(&self.lanes) {
            return bad(format!("lanes per carriageway must be 2..=4, got {}", self.lanes));
        }
        if self.vehicles == 0 {
            return bad("vehicle count must be positive".into());
        }
        for (name, v) in [
            ("duration", self.duration),
            ("frame rate", self.frame_rate),
            ("lane-change duration", self.lane_change_duration),
            ("road length", self.road_length),
            ("lane width", self.lane_width),
            ("minimum speed", self.speed_range.0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.speed_range.1 >= self.speed_range.0 && self.speed_range.1.is_finite()) {
            return bad(format!("inverted speed range {:?}", self.speed_range));
        }
        for (name, p) in [
            ("lane-change probability", self.lane_change_probability),
            ("truck fraction", self.truck_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if (self.duration * self.frame_rate).round() < 1.0 {
            return bad("recording shorter than one frame".into());
        }
        Ok(())
    }

    pub fn total_frames(&self) -> Frame {
        (self.duration * self.frame_rate).round() as Frame
    }

    pub fn recording_meta(&self) -> RecordingMeta {
        let upper: Vec<f64> = (0..=self.lanes)
            .map(|k| FIRST_MARKING + k as f64 * self.lane_width)
            .collect();
        let lower_start = upper[self.lanes] + MEDIAN_WIDTH;
        let lower = (0..=self.lanes)
            .map(|k| lower_start + k as f64 * self.lane_width)
            .collect();
        RecordingMeta {
            recording_id: self.recording_id,
            frame_rate: self.frame_rate,
            location_id: self.location_id,
            upper_lane_markings: upper,
            lower_lane_markings: lower,
            duration: self.duration,
        }
    }
}

/// Ground truth of one scripted lane change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedLaneChange {
    pub to_left: bool,
    /// Recording time (s, frame 1 at t = 0) at which the lateral motion starts.
    pub start_time: f64,
    /// Recording time at which the centre crosses the lane marking.
    pub crossing_time: f64,
    pub from_lane: i32,
    pub to_lane: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTruth {
    pub vehicle_id: VehicleId,
    pub direction: DrivingDirection,
    pub speed: f64,
    pub initial_lane: i32,
    pub lane_change: Option<ScriptedLaneChange>,
}

#[derive(Debug, Clone)]
pub struct SyntheticRecording {
    pub recording: Recording,
    pub truth: Vec<VehicleTruth>,
}

pub fn frame_time(frame: Frame, frame_rate: f64) -> f64 {
    (frame - 1) as f64 / frame_rate
}

/// Generates a recording; identical `(config, seed)` always give identical output.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Recording, DatasetError> {
    Ok(generate_with_truth(config, seed)?.recording)
}

pub fn generate_with_truth(
    config: &SynthConfig,
    seed: u64,
) -> Result<SyntheticRecording, DatasetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = config.recording_meta();
    let total = config.total_frames();
    let fps = config.frame_rate;
    let mut builder = RecordingBuilder::new(meta.clone());
    let mut truth = Vec::with_capacity(config.vehicles);

    for i in 0..config.vehicles {
        let vehicle_id = i as VehicleId + 1;
        let direction = if rng.gen_bool(0.5) {
            DrivingDirection::UpperCarriageway
        } else {
            DrivingDirection::LowerCarriageway
        };
        let truck = rng.gen_bool(config.truck_fraction);
        let (length, width) = if truck {
            (rng.gen_range(10.0..18.0), rng.gen_range(2.4..2.6))
        } else {
            (rng.gen_range(4.0..5.2), rng.gen_range(1.7..2.0))
        };
        let lanes = meta.lanes_from_median(direction);
        let lane = lanes[rng.gen_range(0..lanes.len())];
        let (lo, hi) = config.speed_range;
        let speed = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let initial_frame: Frame = rng.gen_range(1..=total);
        let entry = rng.gen_range(0.0..config.road_length / 4.0);
        let visible = ((config.road_length - entry) / speed * fps).floor() as Frame;
        let final_frame = (initial_frame + visible).min(total);
        let life = (final_frame - initial_frame) as f64 / fps;

        let change_roll = rng.gen_bool(config.lane_change_probability);
        let side_roll = rng.gen_bool(0.5);
        let start_roll: f64 = rng.gen_range(0.0..1.0);
        let lane_change = if change_roll {
            let left = adjacent_lane(&meta, direction, lane, true);
            let right = adjacent_lane(&meta, direction, lane, false);
            let pick = match (left, right) {
                (Some(l), Some(r)) => Some(if side_roll { (true, l) } else { (false, r) }),
                (Some(l), None) => Some((true, l)),
                (None, Some(r)) => Some((false, r)),
                (None, None) => None,
            };
            pick.map(|(to_left, to_lane)| {
                let start = start_roll * life;
                let t0 = frame_time(initial_frame, fps);
                ScriptedLaneChange {
                    to_left,
                    start_time: t0 + start,
                    crossing_time: t0 + start + config.lane_change_duration / 2.0,
                    from_lane: lane,
                    to_lane,
                }
            })
        } else {
            None
        };

        let tm = TrackMeta {
            vehicle_id,
            recording_id: config.recording_id,
            initial_frame,
            final_frame,
            width: length,
            height: width,
            driving_direction: direction,
            vehicle_class: if truck { VehicleClass::Truck } else { VehicleClass::Car },
        };
        let (top, bottom) = {
            let b = meta.lane_bounds(lane).expect("lane from layout");
            (b.1, b.2)
        };
        let lane_center = (top + bottom) / 2.0;
        let states = (initial_frame..=final_frame)
            .map(|frame| {
                let t = frame_time(frame, fps);
                let s = entry + speed * (t - frame_time(initial_frame, fps));
                let (lat, lat_v) = match &lane_change {
                    Some(lc) => half_cosine(
                        t - lc.start_time,
                        config.lane_change_duration,
                        if lc.to_left { config.lane_width } else { -config.lane_width },
                    ),
                    None => (0.0, 0.0),
                };
                let cx = match direction {
                    DrivingDirection::LowerCarriageway => s,
                    DrivingDirection::UpperCarriageway => config.road_length - s,
                };
                let cy = lane_center + direction.left_sign() * lat;
                let bbox = (cx - length / 2.0, cy - width / 2.0);
                let vel = (direction.forward_sign() * speed, direction.left_sign() * lat_v);
                let mut st = VehicleState::from_bbox(&tm, frame, bbox, vel, lane);
                st.lane_id = meta.lane_at(direction, st.center_y).unwrap_or(lane);
                st
            })
            .collect();
        builder.push_track(tm, states);
        truth.push(VehicleTruth {
            vehicle_id,
            direction,
            speed,
            initial_lane: lane,
            lane_change,
        });
    }
    builder.assign_surroundings();
    Ok(SyntheticRecording {
        recording: builder.build()?,
        truth,
    })
}

/// Lateral offset and rate of a half-cosine manoeuvre of total displacement `delta`.
pub fn half_cosine(tau: f64, duration: f64, delta: f64) -> (f64, f64) {
    if tau <= 0.0 {
        (0.0, 0.0)
    } else if tau >= duration {
        (delta, 0.0)
    } else {
        let u = tau / duration;
        (
            delta * (1.0 - (PI * u).cos()) / 2.0,
            delta * PI / (2.0 * duration) * (PI * u).sin(),
        )
    }
}

/// Generates `count` recordings with ids `1..=count` and seeds `seed + id`.
pub fn generate_dataset(
    config: &SynthConfig,
    seed: u64,
    count: u32,
) -> Result<Dataset, DatasetError> {
    let recs = (1..=count)
        .map(|id| {
            let cfg = SynthConfig {
                recording_id: id,
                ..config.clone()
            };
            generate_synthetic(&cfg, seed.wrapping_add(id as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(recs))
}

/// Generates and writes `count` recordings into `dir`.
pub fn write_synthetic(
    config: &SynthConfig,
    seed: u64,
    count: u32,
    dir: &Path,
) -> Result<Dataset, DatasetError> {
    let ds = generate_dataset(config, seed, count)?;
    for rec in ds.recordings() {
        write_recording(rec, dir)?;
    }
    Ok(ds)
}

/// A vehicle placed relative to a planted ego, in the canonical ego frame
/// (x forward, y toward the ego's left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedVehicle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
}

/// Builds a recording of isolated single-frame scenes on the lower
/// carriageway. Scene `i` puts an ego in `ego_lane` at `x = 1000 + i·spacing`
/// and surrounds it with `scenes[i]`; neighbour slots are then assigned by
/// the usual nearest-in-lane rules. Returns the recording and the ego scene
/// keys, in scene order.
pub fn plant_scenes(
    meta: RecordingMeta,
    ego_lane: i32,
    ego_speed: f64,
    scenes: &[Vec<PlantedVehicle>],
    spacing: f64,
) -> Result<(Recording, Vec<crate::context::SceneKey>), DatasetError> {
    let dir = DrivingDirection::LowerCarriageway;
    let (_, top, bottom) = meta
        .lane_bounds(ego_lane)
        .filter(|b| b.0 == dir)
        .ok_or_else(|| DatasetError::InvalidConfig(format!("lane {ego_lane} is not a lower lane")))?;
    let lane_center = (top + bottom) / 2.0;
    let mut builder = RecordingBuilder::new(meta.clone());
    let mut keys = Vec::with_capacity(scenes.len());
    let mut next_id: VehicleId = 1;
    let mut add = |builder: &mut RecordingBuilder, v: PlantedVehicle, cx: f64, cy: f64| {
        let id = next_id;
        next_id += 1;
        let tm = TrackMeta {
            vehicle_id: id,
            recording_id: meta.recording_id,
            initial_frame: 1,
            final_frame: 1,
            width: v.length,
            height: 1.9,
            driving_direction: dir,
            vehicle_class: VehicleClass::Car,
        };
        let lane = meta.lane_at(dir, cy).ok_or_else(|| {
            DatasetError::InvalidConfig(format!("planted vehicle at y={cy} is off the carriageway"))
        })?;
        let st = VehicleState::from_bbox(
            &tm,
            1,
            (cx - v.length / 2.0, cy - 0.95),
            (dir.forward_sign() * v.vx, dir.left_sign() * v.vy),
            lane,
        );
        builder.push_track(tm, vec![st]);
        Ok::<VehicleId, DatasetError>(id)
    };
    for (i, scene) in scenes.iter().enumerate() {
        let anchor = 1000.0 + i as f64 * spacing;
        let ego = PlantedVehicle { x: 0.0, y: 0.0, vx: ego_speed, vy: 0.0, length: 4.5 };
        let id = add(&mut builder, ego, anchor, lane_center)?;
        keys.push(crate::context::SceneKey::new(meta.recording_id, id, 1));
        for v in scene {
            add(&mut builder, *v, anchor + v.x, lane_center + dir.left_sign() * v.y)?;
        }
    }
    builder.assign_surroundings();
    Ok((builder.build()?, keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Slot;

    #[test]
    fn rejects_invalid_configs() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { lanes: 1, ..base.clone() },
            SynthConfig { lanes: 5, ..base.clone() },
            SynthConfig { vehicles: 0, ..base.clone() },
            SynthConfig { duration: 0.0, ..base.clone() },
            SynthConfig { speed_range: (30.0, 20.0), ..base.clone() },
            SynthConfig { lane_change_probability: 1.5, ..base.clone() },
        ] {
            assert!(matches!(
                generate_synthetic(&cfg, 1),
                Err(DatasetError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn single_vehicle_has_no_neighbours() {
        let cfg = SynthConfig {
            vehicles: 1,
            duration: 10.0,
            ..SynthConfig::default()
        };
        let rec = generate_synthetic(&cfg, 7).unwrap();
        assert_eq!(rec.num_vehicles(), 1);
        assert!(rec
            .tracks()
            .flat_map(|t| t.states.iter())
            .all(|s| s.surroundings.is_empty()));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            vehicles: 30,
            ..SynthConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg, 3).unwrap(),
            generate_synthetic(&cfg, 3).unwrap()
        );
        assert_ne!(
            generate_synthetic(&cfg, 3).unwrap(),
            generate_synthetic(&cfg, 4).unwrap()
        );
    }

    #[test]
    fn lane_changes_follow_the_script() {
        let cfg = SynthConfig {
            vehicles: 40,
            lane_change_probability: 1.0,
            ..SynthConfig::default()
        };
        let out = generate_with_truth(&cfg, 11).unwrap();
        let mut checked = 0;
        for t in &out.truth {
            let lc = t.lane_change.expect("every vehicle scripted");
            let track = out.recording.track(t.vehicle_id).unwrap();
            let last = track.states.last().unwrap();
            if frame_time(last.frame, cfg.frame_rate) > lc.crossing_time + 0.1 {
                assert_eq!(last.lane_id, lc.to_lane);
                checked += 1;
            }
            assert_eq!(track.states[0].lane_id, lc.from_lane);
        }
        assert!(checked > 0);
    }

    #[test]
    fn preceding_is_ahead_in_travel_direction() {
        let cfg = SynthConfig {
            vehicles: 80,
            ..SynthConfig::default()
        };
        let rec = generate_synthetic(&cfg, 5).unwrap();
        for t in rec.tracks() {
            let sign = t.meta.driving_direction.forward_sign();
            for s in &t.states {
                if let Some(p) = s.surroundings.get(Slot::Preceding) {
                    let o = rec.state(p, s.frame).unwrap();
                    assert!(sign * (o.center_x - s.center_x) >= 0.0);
                    assert_eq!(o.lane_id, s.lane_id);
                }
            }
        }
    }

    #[test]
    fn half_cosine_crosses_halfway() {
        let (mid, _) = half_cosine(2.0, 4.0, 3.9);
        assert!((mid - 1.95).abs() < 1e-12);
        assert_eq!(half_cosine(-1.0, 4.0, 3.9), (0.0, 0.0));
        assert_eq!(half_cosine(5.0, 4.0, 3.9), (3.9, 0.0));
    }
}
