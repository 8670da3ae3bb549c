use std::collections::HashMap;
use std::path::Path;

use scenematch::context::{ContextParams, RelativeLane};
use scenematch::dataset::synth::{write_synthetic, SynthConfig};
use scenematch::search::{count_candidates, enumerate_candidates};

/// Right-lane scenes with at least one neighbour, counted from the CSV text alone.
fn recount(dir: &Path, recording: u32, stride: u32) -> (u64, u64) {
    let meta = std::fs::read_to_string(dir.join(format!("{recording:02}_recordingMeta.csv"))).unwrap();
    let mut lines = meta.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let nu = col("upperLaneMarkings").split(';').count() as i32 - 1;
    let nl = col("lowerLaneMarkings").split(';').count() as i32 - 1;
    // farthest lane from the median on each side
    let right = [2, nu + 2 + nl];

    let mut initial = HashMap::new();
    let mut r = csv::Reader::from_path(dir.join(format!("{recording:02}_tracksMeta.csv"))).unwrap();
    for rec in r.deserialize::<HashMap<String, String>>() {
        let rec = rec.unwrap();
        initial.insert(rec["id"].clone(), rec["initialFrame"].parse::<u32>().unwrap());
    }
    let slots = [
        "precedingId", "followingId", "leftPrecedingId", "leftAlongsideId", "leftFollowingId",
        "rightPrecedingId", "rightAlongsideId", "rightFollowingId",
    ];
    let (mut visited, mut count) = (0, 0);
    let mut r = csv::Reader::from_path(dir.join(format!("{recording:02}_tracks.csv"))).unwrap();
    for rec in r.deserialize::<HashMap<String, String>>() {
        let rec = rec.unwrap();
        let frame: u32 = rec["frame"].parse().unwrap();
        if !(frame - initial[&rec["id"]]).is_multiple_of(stride) {
            continue;
        }
        visited += 1;
        let lane: i32 = rec["laneId"].parse().unwrap();
        if right.contains(&lane) && slots.iter().any(|s| rec[*s] != "0") {
            count += 1;
        }
    }
    (visited, count)
}

#[test]
fn counts_match_a_recount_of_the_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        vehicles: 120,
        ..SynthConfig::default()
    };
    let ds = write_synthetic(&cfg, 77, 3, dir.path()).unwrap();
    let params = ContextParams::default();
    for stride in [1, 3, 25] {
        let (mut visited, mut count) = (0, 0);
        for id in 1..=3 {
            let (v, c) = recount(dir.path(), id, stride);
            visited += v;
            count += c;
        }
        let (keys, counts) = enumerate_candidates(&ds, RelativeLane::Right, stride, &params);
        assert_eq!(counts.enumerated, visited);
        assert_eq!(counts.candidates(), count);
        assert_eq!(keys.len() as u64, count);
        assert_eq!(count_candidates(&ds, RelativeLane::Right, stride, &params), counts);
    }
}
