//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or usage failure, 2 malformed data or
//! invalid synthetic config, 3 query scene without surrounding vehicles,
//! 4 no candidate scenes, 5 results file fails schema checks.
//! Machine-readable output goes to stdout or files; logs go to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::context::{
    extract_context_set, relative_lane, ContextError, ContextParams, LaneOverrides, RelativeLane,
    SceneKey, DEFAULT_LAMBDA,
};
use crate::dataset::synth::{write_synthetic, SynthConfig};
use crate::dataset::{self, load_dataset, load_recording, recording_ids_in, Dataset, DatasetError};
use crate::response::{
    behavior_distribution, extract_responses, label_counts, write_responses_csv, Axis,
    BehaviorDistribution, DEFAULT_HORIZON,
};
use crate::search::{
    count_candidates, resolve_sets, search, spread_report, ResultsFile, SearchError,
    SearchOptions, SearchQuery, SearchStats,
};

pub const DATA_DIR_ENV: &str = "SCENEMATCH_DATA_DIR";

pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const MALFORMED: u8 = 2;
    pub const EMPTY_CONTEXT: u8 = 3;
    pub const NO_CANDIDATES: u8 = 4;
    pub const SCHEMA: u8 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "scenematch", version, about = "Find traffic scenes with similar surrounding traffic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load every recording in a directory and report violations.
    Validate {
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: PathBuf,
    },
    /// Print the context set of one scene as JSON.
    Inspect(InspectArgs),
    /// Count candidate scenes in one relative lane.
    Candidates {
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: PathBuf,
        #[arg(long, default_value = "right")]
        lane: RelativeLane,
        #[arg(long, default_value_t = 1)]
        stride: u32,
        #[arg(long)]
        lane_override: Option<PathBuf>,
    },
    /// Rank all scenes by distance to an example scene.
    Search(SearchArgs),
    /// Extract and summarize the ego trajectories after retrieved scenes.
    Responses(ResponsesArgs),
    /// Write a synthetic dataset in the highD layout.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub recording: u32,
    #[arg(long)]
    pub ego: u32,
    #[arg(long)]
    pub frame: u32,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub include_ego: bool,
    /// Lane classification override table.
    #[arg(long)]
    pub lane_override: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 250)]
    pub top: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
    #[arg(long)]
    pub exclude_query_vehicle: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Compute every distance in full, without pruning.
    #[arg(long)]
    pub exhaustive: bool,
    /// Results file; the manifest is written next to it as `<stem>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResponsesArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Snapshot times (s) for the density estimates.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    pub snapshots: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    pub grid_points: usize,
    /// Output directory for responses.csv, labels.json and densities.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub lanes: usize,
    #[arg(long, default_value_t = 100)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub recordings: u32,
    #[arg(long, default_value_t = 0.2)]
    pub lane_change_probability: f64,
    #[arg(long)]
    pub out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::Io { .. } => exit::FAILURE,
            _ => exit::MALFORMED,
        };
        Failure::new(code, e)
    }
}

impl From<ContextError> for Failure {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::EmptyContext(_) => Failure::new(exit::EMPTY_CONTEXT, e),
            _ => Failure::new(exit::FAILURE, e),
        }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let code = match &e {
            SearchError::EmptyContext(_) | SearchError::Context(ContextError::EmptyContext(_)) => {
                exit::EMPTY_CONTEXT
            }
            SearchError::NoCandidates(_) => exit::NO_CANDIDATES,
            _ => exit::FAILURE,
        };
        Failure::new(code, e)
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(exit::FAILURE, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}

pub fn run(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::Validate { data_dir } => cmd_validate(&data_dir),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Candidates {
            data_dir,
            lane,
            stride,
            lane_override,
        } => cmd_candidates(&data_dir, lane, stride, lane_override.as_deref()),
        Command::Search(a) => cmd_search(&a),
        Command::Responses(a) => cmd_responses(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// SHA-256 over the recording files of `data_dir`, in recording-id order.
pub fn dataset_digest(data_dir: &Path) -> Result<String, DatasetError> {
    let mut h = Sha256::new();
    for id in recording_ids_in(data_dir)? {
        for path in dataset::highd_files(data_dir, id) {
            let bytes = fs::read(&path).map_err(|e| DatasetError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            h.update(path.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(format!("sha256:{:x}", h.finalize()))
}

fn load_overrides(path: Option<&Path>) -> Result<LaneOverrides, Failure> {
    match path {
        Some(p) => LaneOverrides::load(p).map_err(|e| Failure::new(exit::MALFORMED, e)),
        None => Ok(LaneOverrides::default()),
    }
}

fn load(data_dir: &Path) -> Result<Dataset, Failure> {
    eprintln!("loading recordings from {}", data_dir.display());
    Ok(load_dataset(data_dir)?)
}

fn cmd_validate(data_dir: &Path) -> Result<u8, Failure> {
    if !data_dir.is_dir() {
        return Err(Failure::new(exit::FAILURE, format!("{} is not a directory", data_dir.display())));
    }
    let ids = recording_ids_in(data_dir)?;
    if ids.is_empty() {
        println!("0/0 OK (no recordings found)");
        return Ok(exit::MALFORMED);
    }
    let mut ok = 0;
    for id in &ids {
        match load_recording(data_dir, *id) {
            Ok(rec) => {
                ok += 1;
                println!(
                    "recording {id:02}: OK ({} vehicles, {} rows)",
                    rec.num_vehicles(),
                    rec.num_states()
                );
            }
            Err(DatasetError::InconsistentMeta { violations, .. }) => {
                println!("recording {id:02}: FAILED ({} violations)", violations.len());
                for v in violations {
                    println!("  - {v}");
                }
            }
            Err(e) => {
                println!("recording {id:02}: FAILED");
                println!("  - {e}");
            }
        }
    }
    println!("{ok}/{} OK", ids.len());
    Ok(if ok == ids.len() { exit::OK } else { exit::MALFORMED })
}

fn scene_params(a: &SceneArgs) -> Result<ContextParams, Failure> {
    Ok(ContextParams {
        lambda: a.lambda,
        include_ego: a.include_ego,
        overrides: load_overrides(a.lane_override.as_deref())?,
    })
}

fn cmd_inspect(a: &InspectArgs) -> Result<u8, Failure> {
    let s = &a.scene;
    let rec = load_recording(&s.data_dir, s.recording)?;
    let params = scene_params(s)?;
    let key = SceneKey::new(s.recording, s.ego, s.frame);
    let lane = relative_lane(&rec, s.ego, s.frame, &params.overrides)?;
    let set = extract_context_set(&rec, key, &params)?;

    #[derive(Serialize)]
    struct Out<'a> {
        recording: u32,
        ego: u32,
        frame: u32,
        lambda: f64,
        relative_lane: RelativeLane,
        points: &'a [crate::context::ContextPoint],
    }
    print!(
        "{}",
        to_json(&Out {
            recording: s.recording,
            ego: s.ego,
            frame: s.frame,
            lambda: set.lambda,
            relative_lane: lane,
            points: &set.points,
        })
    );
    Ok(exit::OK)
}

fn cmd_candidates(
    data_dir: &Path,
    lane: RelativeLane,
    stride: u32,
    lane_override: Option<&Path>,
) -> Result<u8, Failure> {
    let ds = load(data_dir)?;
    let params = ContextParams {
        overrides: load_overrides(lane_override)?,
        ..ContextParams::default()
    };
    let c = count_candidates(&ds, lane, stride.max(1), &params);
    #[derive(Serialize)]
    struct Out {
        recordings: usize,
        lane: RelativeLane,
        stride: u32,
        enumerated: u64,
        after_lane_filter: u64,
        skipped_empty_context: u64,
    }
    print!(
        "{}",
        to_json(&Out {
            recordings: ds.len(),
            lane,
            stride,
            enumerated: c.enumerated,
            after_lane_filter: c.after_lane_filter,
            skipped_empty_context: c.skipped_empty_context,
        })
    );
    Ok(exit::OK)
}

/// Everything needed to rerun a search on the same data.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub query: SearchQuery,
    pub lane_override: Option<String>,
    pub lane_override_sha256: Option<String>,
    pub threads: Option<usize>,
    pub exhaustive: bool,
    pub data_dir: String,
    pub dataset_digest: String,
    pub recordings: usize,
    pub results_file: String,
    pub results_sha256: String,
    pub stats: SearchStats,
    pub timestamp_unix: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}

pub fn manifest_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().unwrap_or_default().to_string_lossy();
    results.with_file_name(format!("{stem}.manifest.json"))
}

fn cmd_search(a: &SearchArgs) -> Result<u8, Failure> {
    let s = &a.scene;
    let ds = load(&s.data_dir)?;
    let params = scene_params(s)?;
    let query = SearchQuery {
        example: SceneKey::new(s.recording, s.ego, s.frame),
        lambda: s.lambda,
        top_n: a.top,
        frame_stride: a.stride,
        include_ego: s.include_ego,
        exclude_query_vehicle: a.exclude_query_vehicle,
    };
    let options = SearchOptions {
        threads: a.threads,
        exhaustive: a.exhaustive,
        overrides: params.overrides.clone(),
    };
    eprintln!("searching {} recordings for {}", ds.len(), query.example);
    let result = search(&ds, &query, &options)?;
    let sets = resolve_sets(&ds, result.entries.iter().map(|e| e.key), &params)?;
    let json = ResultsFile::new(&result, &sets).to_json();
    write_file(&a.out, json.as_bytes())?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "search".into(),
        query: query.clone(),
        lane_override: s.lane_override.as_ref().map(|p| p.display().to_string()),
        lane_override_sha256: match &s.lane_override {
            Some(p) => Some(sha256_hex(&fs::read(p).map_err(|e| io_failure(p, e))?)),
            None => None,
        },
        threads: a.threads,
        exhaustive: a.exhaustive,
        data_dir: s.data_dir.display().to_string(),
        dataset_digest: dataset_digest(&s.data_dir)?,
        recordings: ds.len(),
        results_file: a.out.display().to_string(),
        results_sha256: sha256_hex(json.as_bytes()),
        stats: result.stats,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write_file(&manifest_path(&a.out), to_json(&manifest).as_bytes())?;

    let spread = spread_report(&result.query_set, &sets);
    eprintln!(
        "{} candidates in lane {}, {} distances, {} pruned, {:.2} s",
        result.stats.candidates_after_lane_filter - result.stats.skipped_empty_context,
        result.query_set.relative_lane,
        result.stats.distances_computed,
        result.stats.pruned,
        result.stats.wall_time_s
    );
    eprintln!(
        "set sizes {:?}; max |dx| {:.2} m, max |dy| {:.2} m",
        spread.cardinality, spread.max_abs_deviation[0], spread.max_abs_deviation[1]
    );
    println!("{:>4}  {:>9}  {:>6}  {:>7}  {:>10}  {:>6}", "rank", "recording", "ego", "frame", "distance", "points");
    for (i, (e, set)) in result.entries.iter().zip(&sets).take(10).enumerate() {
        println!(
            "{:>4}  {:>9}  {:>6}  {:>7}  {:>10.4}  {:>6}",
            i + 1,
            e.key.recording_id,
            e.key.ego_id,
            e.key.frame,
            e.distance.value(),
            set.len()
        );
    }
    Ok(exit::OK)
}

fn cmd_responses(a: &ResponsesArgs) -> Result<u8, Failure> {
    let results = ResultsFile::read(&a.results).map_err(|e| match e {
        crate::search::ResultsFileError::Schema(m) => {
            Failure::new(exit::SCHEMA, format!("{}: {m}", a.results.display()))
        }
        other => Failure::new(exit::FAILURE, other),
    })?;
    let ds = load(&a.data_dir)?;
    let keys: Vec<SceneKey> = results.entries.iter().map(|e| e.key()).collect();
    let responses = extract_responses(&ds, &keys, a.horizon)
        .map_err(|e| Failure::new(exit::SCHEMA, format!("results do not match the data: {e}")))?;

    let mut csv = Vec::new();
    write_responses_csv(&mut csv, &responses).map_err(|e| Failure::new(exit::FAILURE, e))?;
    write_file(&a.out.join("responses.csv"), &csv)?;

    let counts = label_counts(&responses);
    write_file(&a.out.join("labels.json"), to_json(&counts).as_bytes())?;

    #[derive(Serialize)]
    struct Densities {
        densities: BTreeMap<String, BehaviorDistribution>,
        skipped: BTreeMap<String, String>,
    }
    let mut out = Densities {
        densities: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    for t in &a.snapshots {
        for axis in [Axis::Longitudinal, Axis::Lateral] {
            let name = format!("t={t}/{}", format!("{axis:?}").to_lowercase());
            match behavior_distribution(&responses, *t, axis, a.grid_points) {
                Ok(d) => {
                    out.densities.insert(name, d);
                }
                Err(e) => {
                    eprintln!("skipping {name}: {e}");
                    out.skipped.insert(name, e.to_string());
                }
            }
        }
    }
    write_file(&a.out.join("densities.json"), to_json(&out).as_bytes())?;
    print!("{}", to_json(&counts));
    Ok(exit::OK)
}

fn cmd_synth(a: &SynthArgs) -> Result<u8, Failure> {
    let config = SynthConfig {
        lanes: a.lanes,
        vehicles: a.vehicles,
        duration: a.duration,
        lane_change_probability: a.lane_change_probability,
        ..SynthConfig::default()
    };
    config.validate()?;
    if a.recordings == 0 {
        return Err(Failure::new(exit::MALFORMED, "invalid synthetic config: need at least one recording"));
    }
    let ds = write_synthetic(&config, a.seed, a.recordings, &a.out)?;
    let states: usize = ds.recordings().iter().map(|r| r.num_states()).sum();
    println!(
        "wrote {} recordings ({states} rows) to {}, digest {}",
        ds.len(),
        a.out.display(),
        dataset_digest(&a.out)?
    );
    Ok(exit::OK)
}
