use std::collections::HashMap;

use proptest::prelude::*;
use scenematch::context::{extract_context_set, ContextParams, RelativeLane, SceneKey};
use scenematch::dataset::synth::{generate_synthetic, plant_scenes, PlantedVehicle, SynthConfig};
use scenematch::dataset::{load_recording, write_recording, DrivingDirection, Slot};
use scenematch::metric::hausdorff;

fn recording(seed: u64, lanes: usize) -> scenematch::Recording {
    let cfg = SynthConfig {
        vehicles: 60,
        lanes,
        duration: 40.0,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg, seed).unwrap()
}

#[test]
fn matches_a_transform_of_the_raw_rows() {
    let rec = recording(4, 3);
    let dir = tempfile::tempdir().unwrap();
    write_recording(&rec, dir.path()).unwrap();
    let rec = load_recording(dir.path(), 1).unwrap();

    let mut dirs = HashMap::new();
    let mut r = csv::Reader::from_path(dir.path().join("01_tracksMeta.csv")).unwrap();
    for row in r.deserialize::<HashMap<String, String>>() {
        let row = row.unwrap();
        dirs.insert(row["id"].parse::<u32>().unwrap(), row["drivingDirection"].parse::<u8>().unwrap());
    }
    let mut rows: HashMap<(u32, u32), HashMap<String, String>> = HashMap::new();
    let mut r = csv::Reader::from_path(dir.path().join("01_tracks.csv")).unwrap();
    for row in r.deserialize::<HashMap<String, String>>() {
        let row = row.unwrap();
        rows.insert((row["id"].parse().unwrap(), row["frame"].parse().unwrap()), row);
    }
    let f = |row: &HashMap<String, String>, k: &str| row[k].parse::<f64>().unwrap();

    let params = ContextParams::default();
    let mut checked = 0;
    for ((id, frame), ego) in rows.iter().filter(|(k, _)| k.1 % 7 == 0) {
        let (fwd, left) = if dirs[id] == 1 { (-1.0, 1.0) } else { (1.0, -1.0) };
        let ecx = f(ego, "x") + f(ego, "width") / 2.0;
        let ecy = f(ego, "y") + f(ego, "height") / 2.0;
        let mut expect = Vec::new();
        for slot in Slot::ALL {
            let nid: u32 = ego[slot.column()].parse().unwrap();
            if nid == 0 {
                continue;
            }
            let n = &rows[&(nid, *frame)];
            let y = left * (f(n, "y") + f(n, "height") / 2.0 - ecy);
            let vy = left * f(n, "yVelocity");
            expect.push([fwd * (f(n, "x") + f(n, "width") / 2.0 - ecx), 10.0 * y, fwd * f(n, "xVelocity"), 10.0 * vy]);
        }
        match extract_context_set(&rec, SceneKey::new(1, *id, *frame), &params) {
            Ok(set) => {
                let got: Vec<_> = set.points.iter().map(|p| p.coords()).collect();
                assert_eq!(got.len(), expect.len());
                for (g, e) in got.iter().zip(&expect) {
                    for k in 0..4 {
                        assert!((g[k] - e[k]).abs() < 1e-9, "{id}@{frame}: {g:?} vs {e:?}");
                    }
                }
                checked += 1;
            }
            Err(_) => assert!(expect.is_empty()),
        }
    }
    assert!(checked > 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ahead_is_positive_and_behind_is_negative(seed in 0u64..500, lanes in 2usize..=4) {
        let rec = recording(seed, lanes);
        let params = ContextParams::default();
        for t in rec.tracks() {
            for st in t.states.iter().step_by(11) {
                let Ok(set) = extract_context_set(&rec, SceneKey::new(1, st.vehicle_id, st.frame), &params) else { continue };
                for (p, (slot, _)) in set.points.iter().zip(st.surroundings.iter()) {
                    match slot {
                        Slot::Preceding | Slot::LeftPreceding | Slot::RightPreceding => prop_assert!(p.x > 0.0),
                        Slot::Following | Slot::LeftFollowing | Slot::RightFollowing => prop_assert!(p.x < 0.0),
                        _ => {}
                    }
                    match slot {
                        Slot::LeftPreceding | Slot::LeftAlongside | Slot::LeftFollowing => prop_assert!(p.y > 0.0),
                        Slot::RightPreceding | Slot::RightAlongside | Slot::RightFollowing => prop_assert!(p.y < 0.0),
                        _ => {}
                    }
                    prop_assert!(p.vx > 0.0);
                }
            }
        }
    }

    #[test]
    fn lambda_recovers_the_lateral_offset(y in 0.5f64..5.0, vy in -2.0f64..2.0, a in 0.5f64..20.0, b in 0.5f64..20.0) {
        let key = SceneKey::new(1, 1, 1);
        let base = scenematch::ContextSet::from_unscaled(key, a, RelativeLane::Right, &[[0.0, 0.0, 30.0, 0.0]]);
        let moved = scenematch::ContextSet::from_unscaled(key, a, RelativeLane::Right, &[[0.0, y, 30.0, vy]]);
        let expect_a = (a * y).hypot(a * vy);
        prop_assert!((hausdorff(&base, &moved).unwrap().value() - expect_a).abs() <= 1e-12 * expect_a);
        let d_b = hausdorff(&base.with_lambda(b), &moved.with_lambda(b)).unwrap().value();
        prop_assert!((d_b - (b * y).hypot(b * vy)).abs() <= 1e-12 * d_b);
        prop_assert_eq!(moved.with_lambda(b).with_lambda(a), moved);
    }
}

fn planted(scene: Vec<PlantedVehicle>) -> (scenematch::Recording, SceneKey) {
    let cfg = SynthConfig {
        lanes: 3,
        ..SynthConfig::default()
    };
    let meta = cfg.recording_meta();
    let center = meta.lanes_from_median(DrivingDirection::LowerCarriageway)[1];
    let (rec, keys) = plant_scenes(meta, center, 30.0, &[scene], 1000.0).unwrap();
    (rec, keys[0])
}

#[test]
fn mirrored_scene_mirrors_the_context() {
    let v = |x: f64, y: f64, vx: f64, vy: f64| PlantedVehicle { x, y, vx, vy, length: 4.5 };
    let scene = vec![
        v(25.0, 0.0, 31.0, 0.0),
        v(-40.0, 0.0, 29.0, 0.1),
        v(12.0, 3.9, 33.0, -0.4),
        v(1.0, -3.9, 30.5, 0.3),
        v(-20.0, -3.7, 27.0, 0.0),
    ];
    let mirror: Vec<_> = scene.iter().map(|p| PlantedVehicle { y: -p.y, vy: -p.vy, ..*p }).collect();
    let (ra, ka) = planted(scene);
    let (rb, kb) = planted(mirror);
    let params = ContextParams::default();
    let a = extract_context_set(&ra, ka, &params).unwrap();
    let b = extract_context_set(&rb, kb, &params).unwrap();
    assert_eq!(a.relative_lane, RelativeLane::Center);
    assert_eq!(a.len(), 5);
    let sa = ra.state(ka.ego_id, 1).unwrap().surroundings;
    let sb = rb.state(kb.ego_id, 1).unwrap().surroundings;
    for slot in Slot::ALL {
        assert_eq!(sa.get(slot), sb.get(slot.mirrored()), "{slot:?}");
    }
    let flip = |s: &scenematch::ContextSet| {
        let mut v: Vec<[f64; 4]> = s.points.iter().map(|p| [p.x, -p.y, p.vx, -p.vy]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let mut pb: Vec<[f64; 4]> = b.points.iter().map(|p| p.unscaled()).collect();
    pb.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (x, y) in flip(&a).iter().zip(&pb) {
        for k in 0..4 {
            assert!((x[k] - y[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn shipped_override_template_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lane_overrides.txt");
    assert!(scenematch::context::LaneOverrides::load(&path).unwrap().is_empty());
}
