//! Nearest-in-lane neighbour assignment.
//!
//! Vehicles are ordered along their direction of travel by `(s, id)`, where
//! `s` is the forward coordinate of the centre. In the ego's own lane the
//! preceding vehicle is the next one in that order and the following vehicle
//! the previous one. In an adjacent lane a vehicle is alongside when the two
//! longitudinal extents overlap; the closest overlapping vehicle fills the
//! alongside slot and the nearest non-overlapping vehicles ahead and behind
//! fill the preceding/following slots.

use std::collections::{BTreeMap, HashMap};

use super::{DrivingDirection, Frame, RecordingMeta, Slot, Surroundings, Track, VehicleId};

#[derive(Clone, Copy)]
struct Occupant {
    id: VehicleId,
    s: f64,
    half_length: f64,
}

/// Lane id one step toward the driver's left or right, if it exists on the carriageway.
pub(crate) fn adjacent_lane(
    meta: &RecordingMeta,
    direction: DrivingDirection,
    lane_id: i32,
    left: bool,
) -> Option<i32> {
    let lanes = meta.lanes_from_median(direction);
    let pos = lanes.iter().position(|l| *l == lane_id)?;
    // lanes are ordered median-first, so left is toward index 0
    if left {
        pos.checked_sub(1).map(|p| lanes[p])
    } else {
        lanes.get(pos + 1).copied()
    }
}

pub fn assign_surroundings(meta: &RecordingMeta, tracks: &mut BTreeMap<VehicleId, Track>) {
    let mut by_frame: BTreeMap<Frame, HashMap<i32, Vec<Occupant>>> = BTreeMap::new();
    let mut direction_of: HashMap<VehicleId, DrivingDirection> = HashMap::new();
    for track in tracks.values() {
        let dir = track.meta.driving_direction;
        direction_of.insert(track.meta.vehicle_id, dir);
        for st in &track.states {
            by_frame
                .entry(st.frame)
                .or_default()
                .entry(st.lane_id)
                .or_default()
                .push(Occupant {
                    id: st.vehicle_id,
                    s: dir.forward_sign() * st.center_x,
                    half_length: track.meta.width / 2.0,
                });
        }
    }
    for lanes in by_frame.values_mut() {
        for occupants in lanes.values_mut() {
            occupants.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.id.cmp(&b.id)));
        }
    }

    for track in tracks.values_mut() {
        let dir = track.meta.driving_direction;
        for st in &mut track.states {
            let lanes = &by_frame[&st.frame];
            let own = &lanes[&st.lane_id];
            let me = own.iter().position(|o| o.id == st.vehicle_id).expect("indexed above");
            let mut sur = Surroundings::default();
            sur.set(Slot::Following, me.checked_sub(1).map(|i| own[i].id));
            sur.set(Slot::Preceding, own.get(me + 1).map(|o| o.id));

            let ego = own[me];
            for (left, [pre, along, fol]) in [
                (true, [Slot::LeftPreceding, Slot::LeftAlongside, Slot::LeftFollowing]),
                (false, [Slot::RightPreceding, Slot::RightAlongside, Slot::RightFollowing]),
            ] {
                let Some(lane) = adjacent_lane(meta, dir, st.lane_id, left) else {
                    continue;
                };
                let Some(others) = lanes.get(&lane) else {
                    continue;
                };
                let (p, a, f) = adjacent_neighbours(ego, others);
                sur.set(pre, p);
                sur.set(along, a);
                sur.set(fol, f);
            }
            st.surroundings = sur;
        }
    }
}

fn adjacent_neighbours(
    ego: Occupant,
    sorted: &[Occupant],
) -> (Option<VehicleId>, Option<VehicleId>, Option<VehicleId>) {
    let mut preceding: Option<(f64, VehicleId)> = None;
    let mut alongside: Option<(f64, VehicleId)> = None;
    let mut following: Option<(f64, VehicleId)> = None;
    for o in sorted {
        let ds = o.s - ego.s;
        if ds.abs() < ego.half_length + o.half_length {
            // ties on |ds| resolve to the lower id, the first seen at equal s
            if alongside.is_none_or(|(d, id)| ds.abs() < d || (ds.abs() == d && o.id < id)) {
                alongside = Some((ds.abs(), o.id));
            }
        } else if ds > 0.0 {
            if preceding.is_none_or(|(d, _)| ds < d) {
                preceding = Some((ds, o.id));
            }
        } else if following.is_none_or(|(d, _)| ds > d) {
            following = Some((ds, o.id));
        }
    }
    (
        preceding.map(|p| p.1),
        alongside.map(|p| p.1),
        following.map(|p| p.1),
    )
}
