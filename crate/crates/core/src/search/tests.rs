use super::*;
use crate::context::LaneOverrides;
use crate::dataset::synth::{generate_dataset, plant_scenes, PlantedVehicle, SynthConfig};
use crate::metric::hausdorff;

fn small_dataset() -> Dataset {
    let cfg = SynthConfig {
        vehicles: 60,
        duration: 40.0,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, 7, 2).unwrap()
}

/// A right-lane scene with at least one neighbour.
fn some_query(ds: &Dataset) -> SceneKey {
    let params = ContextParams::default();
    let (keys, _) = enumerate_candidates(ds, RelativeLane::Right, 1, &params);
    keys[keys.len() / 2]
}

fn opts(threads: usize, exhaustive: bool) -> SearchOptions {
    SearchOptions {
        threads: Some(threads),
        exhaustive,
        overrides: LaneOverrides::default(),
    }
}

#[test]
fn query_scene_ranks_first_at_zero() {
    let ds = small_dataset();
    let key = some_query(&ds);
    let mut q = SearchQuery::new(key);
    q.top_n = 5;
    let r = search(&ds, &q, &opts(1, false)).unwrap();
    assert_eq!(r.entries[0].distance, Distance::ZERO);
    assert_eq!((r.entries[0].key.recording_id, r.entries[0].key.ego_id), (key.recording_id, key.ego_id));
    assert!(verify_result(&ds, &r, &LaneOverrides::default()).is_empty());
}

#[test]
fn excluding_the_query_vehicle() {
    let ds = small_dataset();
    let key = some_query(&ds);
    let mut q = SearchQuery::new(key);
    q.top_n = 50;
    q.exclude_query_vehicle = true;
    let r = search(&ds, &q, &opts(2, false)).unwrap();
    assert!(r
        .entries
        .iter()
        .all(|e| (e.key.recording_id, e.key.ego_id) != (key.recording_id, key.ego_id)));
}

#[test]
fn huge_stride_keeps_initial_frames_only() {
    let ds = small_dataset();
    let key = some_query(&ds);
    let mut q = SearchQuery::new(key);
    q.frame_stride = 1_000_000;
    let r = match search(&ds, &q, &opts(1, false)) {
        Ok(r) => r,
        Err(SearchError::NoCandidates(_)) => return,
        Err(e) => panic!("{e}"),
    };
    for e in &r.entries {
        let m = ds.recording(e.key.recording_id).unwrap().track_meta(e.key.ego_id).unwrap();
        assert_eq!(e.key.frame, m.initial_frame);
    }
    assert!(verify_result(&ds, &r, &LaneOverrides::default()).is_empty());
}

#[test]
fn thread_count_and_pruning_do_not_change_entries() {
    let ds = small_dataset();
    let q = SearchQuery {
        top_n: 40,
        ..SearchQuery::new(some_query(&ds))
    };
    let reference = search_exhaustive(&ds, &q, &LaneOverrides::default()).unwrap();
    for threads in [1, 3, 8] {
        let r = search(&ds, &q, &opts(threads, false)).unwrap();
        assert_eq!(r.entries, reference.entries, "threads {threads}");
        assert_eq!(r.stats.candidates_after_lane_filter, reference.stats.candidates_after_lane_filter);
    }
    assert_eq!(reference.stats.pruned, 0);
}

#[test]
fn smaller_n_is_a_prefix() {
    let ds = small_dataset();
    let base = SearchQuery::new(some_query(&ds));
    let big = search(&ds, &SearchQuery { top_n: 30, ..base.clone() }, &opts(4, false)).unwrap();
    for n in [1, 7, 29] {
        let r = search(&ds, &SearchQuery { top_n: n, ..base.clone() }, &opts(4, false)).unwrap();
        assert_eq!(r.entries[..], big.entries[..n]);
    }
}

#[test]
fn distances_match_direct_recomputation() {
    let ds = small_dataset();
    let q = SearchQuery {
        top_n: 20,
        ..SearchQuery::new(some_query(&ds))
    };
    let r = search(&ds, &q, &opts(4, false)).unwrap();
    let sets = resolve_sets(&ds, r.entries.iter().map(|e| e.key), &ContextParams::default()).unwrap();
    for (e, s) in r.entries.iter().zip(&sets) {
        assert_eq!(hausdorff(&r.query_set, s).unwrap(), e.distance);
    }
}

#[test]
fn candidate_counts_match_a_recount() {
    let ds = small_dataset();
    let params = ContextParams::default();
    for stride in [1, 5] {
        let (keys, counts) = enumerate_candidates(&ds, RelativeLane::Right, stride, &params);
        let mut n = 0u64;
        let mut visited = 0u64;
        for rec in ds.recordings() {
            for t in rec.tracks() {
                for s in &t.states {
                    if (s.frame - t.meta.initial_frame) % stride != 0 {
                        continue;
                    }
                    visited += 1;
                    let lane = crate::context::relative_lane(rec, t.meta.vehicle_id, s.frame, &params.overrides);
                    if lane == Ok(RelativeLane::Right) && !s.surroundings.is_empty() {
                        n += 1;
                    }
                }
            }
        }
        assert_eq!(counts.enumerated, visited);
        assert_eq!(counts.candidates(), n);
        assert_eq!(keys.len() as u64, n);
        assert_eq!(count_candidates(&ds, RelativeLane::Right, stride, &params), counts);
    }
}

#[test]
fn empty_query_context() {
    let cfg = SynthConfig {
        vehicles: 1,
        duration: 5.0,
        ..SynthConfig::default()
    };
    let ds = generate_dataset(&cfg, 1, 1).unwrap();
    let t = ds.recordings()[0].tracks().next().unwrap();
    let key = SceneKey::new(1, t.meta.vehicle_id, t.meta.initial_frame);
    assert_eq!(
        search(&ds, &SearchQuery::new(key), &opts(1, false)),
        Err(SearchError::EmptyContext(key))
    );
}

#[test]
fn no_candidates_when_only_the_query_vehicle_qualifies() {
    let cfg = SynthConfig::default();
    let mut meta = cfg.recording_meta();
    meta.duration = 1.0;
    let lane = meta.lanes_from_median(crate::dataset::DrivingDirection::LowerCarriageway)[1];
    let lead = PlantedVehicle { x: 30.0, y: cfg.lane_width, vx: 30.0, vy: 0.0, length: 4.5 };
    let (rec, keys) = plant_scenes(meta, lane, 30.0, &[vec![lead]], 500.0).unwrap();
    let ds = Dataset::new(vec![rec]);
    let q = SearchQuery {
        exclude_query_vehicle: true,
        ..SearchQuery::new(keys[0])
    };
    assert_eq!(
        search(&ds, &q, &opts(1, false)),
        Err(SearchError::NoCandidates(RelativeLane::Right))
    );
}

#[test]
fn rejects_invalid_queries() {
    let ds = small_dataset();
    let key = some_query(&ds);
    for q in [
        SearchQuery { top_n: 0, ..SearchQuery::new(key) },
        SearchQuery { frame_stride: 0, ..SearchQuery::new(key) },
        SearchQuery { lambda: -1.0, ..SearchQuery::new(key) },
    ] {
        assert!(matches!(search(&ds, &q, &opts(1, false)), Err(SearchError::InvalidQuery(_))));
    }
}

#[test]
fn verify_result_flags_duplicates() {
    let ds = small_dataset();
    let q = SearchQuery {
        top_n: 3,
        ..SearchQuery::new(some_query(&ds))
    };
    let mut r = search(&ds, &q, &opts(1, false)).unwrap();
    let dup = r.entries[0];
    r.entries[1] = dup;
    assert!(!verify_result(&ds, &r, &LaneOverrides::default()).is_empty());
}
