//! highD CSV reader and writer.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    Dataset, DatasetError, DrivingDirection, Frame, Recording, RecordingBuilder, RecordingMeta,
    Slot, Surroundings, Track, TrackMeta, VehicleClass, VehicleId, VehicleState,
};

const TRACKS_COLUMNS: [&str; 17] = [
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "laneId",
    "precedingId",
    "followingId",
    "leftPrecedingId",
    "leftAlongsideId",
    "leftFollowingId",
    "rightPrecedingId",
    "rightAlongsideId",
    "rightFollowingId",
];
const TRACKS_META_COLUMNS: [&str; 7] = [
    "id",
    "width",
    "height",
    "initialFrame",
    "finalFrame",
    "drivingDirection",
    "class",
];
const RECORDING_META_COLUMNS: [&str; 5] = [
    "id",
    "frameRate",
    "locationId",
    "upperLaneMarkings",
    "lowerLaneMarkings",
];

pub(crate) fn file_name(recording_id: u32, kind: &str) -> String {
    format!("{recording_id:02}_{kind}.csv")
}

/// Paths of the three files of a recording, in a fixed order.
pub fn recording_files(data_dir: &Path, recording_id: u32) -> [PathBuf; 3] {
    ["recordingMeta", "tracksMeta", "tracks"].map(|k| data_dir.join(file_name(recording_id, k)))
}

/// Recording ids with a `XX_recordingMeta.csv` file in `data_dir`, ascending.
pub fn recording_ids_in(data_dir: &Path) -> Result<Vec<u32>, DatasetError> {
    let rd = std::fs::read_dir(data_dir).map_err(|e| DatasetError::Io {
        path: data_dir.display().to_string(),
        source: e,
    })?;
    let mut ids: Vec<u32> = rd
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix("_recordingMeta.csv")?.parse().ok()
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Loads every recording found in `data_dir`, in parallel.
pub fn load_dataset(data_dir: &Path) -> Result<Dataset, DatasetError> {
    let ids = recording_ids_in(data_dir)?;
    if ids.is_empty() {
        return Err(DatasetError::EmptyDataset(data_dir.display().to_string()));
    }
    let recs = ids
        .par_iter()
        .map(|id| load_recording(data_dir, *id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(recs))
}

struct Table {
    path: String,
    index: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Table, DatasetError> {
        let shown = path.display().to_string();
        if !path.is_file() {
            return Err(DatasetError::MissingFile(shown));
        }
        let csv_err = |e| DatasetError::Csv {
            path: shown.clone(),
            source: e,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let index: HashMap<String, usize> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        if let Some(col) = required.iter().find(|c| !index.contains_key(**c)) {
            return Err(DatasetError::MalformedRow {
                file: shown,
                row: 1,
                column: col.to_string(),
                message: "required column missing from header".into(),
            });
        }
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        Ok(Table {
            path: shown,
            index,
            rows,
        })
    }

    fn field(&self, row: usize, column: &str) -> &str {
        self.rows[row].get(self.index[column]).unwrap_or("")
    }

    fn malformed(&self, row: usize, column: &str, message: String) -> DatasetError {
        DatasetError::MalformedRow {
            file: self.path.clone(),
            // header is line 1
            row: row + 2,
            column: column.to_string(),
            message,
        }
    }

    fn parse<T: std::str::FromStr>(&self, row: usize, column: &str) -> Result<T, DatasetError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.field(row, column);
        raw.parse::<T>()
            .map_err(|e| self.malformed(row, column, format!("cannot parse {raw:?}: {e}")))
    }

    fn float(&self, row: usize, column: &str) -> Result<f64, DatasetError> {
        let v: f64 = self.parse(row, column)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.malformed(row, column, format!("non-finite value {v}")))
        }
    }

    /// highD stores ids as integers, occasionally with a trailing ".0".
    fn id(&self, row: usize, column: &str) -> Result<u32, DatasetError> {
        let raw = self.field(row, column);
        let trimmed = raw.strip_suffix(".0").unwrap_or(raw);
        trimmed
            .parse::<u32>()
            .map_err(|e| self.malformed(row, column, format!("cannot parse {raw:?}: {e}")))
    }
}

fn parse_markings(table: &Table, row: usize, column: &str) -> Result<Vec<f64>, DatasetError> {
    table
        .field(row, column)
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| table.malformed(row, column, format!("lane marking {s:?}: {e}")))
        })
        .collect()
}

/// Loads `XX_recordingMeta.csv`, `XX_tracksMeta.csv` and `XX_tracks.csv`.
pub fn load_recording(data_dir: &Path, recording_id: u32) -> Result<Recording, DatasetError> {
    let [rec_path, meta_path, tracks_path] = recording_files(data_dir, recording_id);
    let rec_table = Table::read(&rec_path, &RECORDING_META_COLUMNS)?;
    let meta_table = Table::read(&meta_path, &TRACKS_META_COLUMNS)?;
    let tracks_table = Table::read(&tracks_path, &TRACKS_COLUMNS)?;

    if rec_table.rows.is_empty() {
        return Err(rec_table.malformed(0, "id", "recording meta has no data row".into()));
    }
    let file_id = rec_table.id(0, "id")?;
    let mut violations = Vec::new();
    if file_id != recording_id {
        violations.push(format!("recordingMeta id {file_id} does not match file prefix {recording_id}"));
    }
    let frame_rate = rec_table.float(0, "frameRate")?;

    let mut track_metas: BTreeMap<VehicleId, TrackMeta> = BTreeMap::new();
    for row in 0..meta_table.rows.len() {
        let vehicle_id = meta_table.id(row, "id")?;
        let dir_code: i64 = meta_table.parse(row, "drivingDirection")?;
        let driving_direction = DrivingDirection::from_code(dir_code).ok_or_else(|| {
            meta_table.malformed(row, "drivingDirection", format!("expected 1 or 2, got {dir_code}"))
        })?;
        let vehicle_class = match meta_table.field(row, "class") {
            "Car" => VehicleClass::Car,
            "Truck" => VehicleClass::Truck,
            other => {
                return Err(meta_table.malformed(row, "class", format!("unknown class {other:?}")))
            }
        };
        let tm = TrackMeta {
            vehicle_id,
            recording_id,
            initial_frame: meta_table.id(row, "initialFrame")?,
            final_frame: meta_table.id(row, "finalFrame")?,
            width: meta_table.float(row, "width")?,
            height: meta_table.float(row, "height")?,
            driving_direction,
            vehicle_class,
        };
        if track_metas.insert(vehicle_id, tm).is_some() {
            violations.push(format!("tracksMeta lists vehicle {vehicle_id} twice"));
        }
    }

    let duration = match rec_table.index.contains_key("duration") {
        true => rec_table.float(0, "duration")?,
        false => {
            let last = track_metas.values().map(|t| t.final_frame).max().unwrap_or(0);
            last as f64 / frame_rate
        }
    };
    let meta = RecordingMeta {
        recording_id,
        frame_rate,
        location_id: rec_table.id(0, "locationId")?,
        upper_lane_markings: parse_markings(&rec_table, 0, "upperLaneMarkings")?,
        lower_lane_markings: parse_markings(&rec_table, 0, "lowerLaneMarkings")?,
        duration,
    };

    let mut per_vehicle: BTreeMap<VehicleId, Vec<VehicleState>> = BTreeMap::new();
    for row in 0..tracks_table.rows.len() {
        let vehicle_id = tracks_table.id(row, "id")?;
        let frame: Frame = tracks_table.id(row, "frame")?;
        let Some(tm) = track_metas.get(&vehicle_id) else {
            violations.push(format!(
                "tracks row {}: vehicle {vehicle_id} not in tracksMeta",
                row + 2
            ));
            continue;
        };
        if !tm.covers(frame) {
            violations.push(format!(
                "tracks row {}: vehicle {vehicle_id} frame {frame} outside declared {}..={}",
                row + 2,
                tm.initial_frame,
                tm.final_frame
            ));
            continue;
        }
        let mut state = VehicleState::from_bbox(
            tm,
            frame,
            (tracks_table.float(row, "x")?, tracks_table.float(row, "y")?),
            (
                tracks_table.float(row, "xVelocity")?,
                tracks_table.float(row, "yVelocity")?,
            ),
            tracks_table.parse(row, "laneId")?,
        );
        let mut surroundings = Surroundings::default();
        for slot in Slot::ALL {
            let id = tracks_table.id(row, slot.column())?;
            surroundings.set(slot, (id != 0).then_some(id));
        }
        state.surroundings = surroundings;
        per_vehicle.entry(vehicle_id).or_default().push(state);
    }

    let mut builder = RecordingBuilder::new(meta);
    for (id, tm) in track_metas {
        let mut states = per_vehicle.remove(&id).unwrap_or_default();
        states.sort_by_key(|s| s.frame);
        if states.windows(2).any(|w| w[0].frame == w[1].frame) {
            violations.push(format!("vehicle {id}: duplicate frame rows"));
        }
        builder.push_track(tm, states);
    }
    match builder.build() {
        Ok(rec) if violations.is_empty() => Ok(rec),
        Ok(_) => Err(DatasetError::InconsistentMeta {
            recording_id,
            violations,
        }),
        Err(DatasetError::InconsistentMeta { violations: v, .. }) => {
            violations.extend(v);
            Err(DatasetError::InconsistentMeta {
                recording_id,
                violations,
            })
        }
        Err(e) => Err(e),
    }
}

fn join_markings(m: &[f64]) -> String {
    m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn create(path: &Path) -> Result<csv::Writer<File>, DatasetError> {
    csv::Writer::from_path(path).map_err(|e| DatasetError::Csv {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes a recording in highD layout. Floats use shortest round-trip formatting,
/// so reading the files back reproduces the recording exactly.
pub fn write_recording(recording: &Recording, data_dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(data_dir).map_err(|e| DatasetError::Io {
        path: data_dir.display().to_string(),
        source: e,
    })?;
    let [rec_path, meta_path, tracks_path] = recording_files(data_dir, recording.id());
    let csv_err = |p: &Path| {
        let p = p.display().to_string();
        move |e| DatasetError::Csv { path: p, source: e }
    };

    let m = recording.meta();
    let cars = recording
        .tracks()
        .filter(|t| t.meta.vehicle_class == VehicleClass::Car)
        .count();
    let mut w = create(&rec_path)?;
    w.write_record([
        "id",
        "frameRate",
        "locationId",
        "duration",
        "numVehicles",
        "numCars",
        "numTrucks",
        "upperLaneMarkings",
        "lowerLaneMarkings",
    ])
    .map_err(csv_err(&rec_path))?;
    w.write_record([
        m.recording_id.to_string(),
        m.frame_rate.to_string(),
        m.location_id.to_string(),
        m.duration.to_string(),
        recording.num_vehicles().to_string(),
        cars.to_string(),
        (recording.num_vehicles() - cars).to_string(),
        join_markings(&m.upper_lane_markings),
        join_markings(&m.lower_lane_markings),
    ])
    .map_err(csv_err(&rec_path))?;
    w.flush().map_err(|e| DatasetError::Io {
        path: rec_path.display().to_string(),
        source: e,
    })?;

    let mut w = create(&meta_path)?;
    w.write_record([
        "id",
        "width",
        "height",
        "initialFrame",
        "finalFrame",
        "numFrames",
        "class",
        "drivingDirection",
    ])
    .map_err(csv_err(&meta_path))?;
    for t in recording.tracks() {
        let tm = &t.meta;
        w.write_record([
            tm.vehicle_id.to_string(),
            tm.width.to_string(),
            tm.height.to_string(),
            tm.initial_frame.to_string(),
            tm.final_frame.to_string(),
            tm.num_frames().to_string(),
            tm.vehicle_class.as_str().to_string(),
            tm.driving_direction.code().to_string(),
        ])
        .map_err(csv_err(&meta_path))?;
    }
    w.flush().map_err(|e| DatasetError::Io {
        path: meta_path.display().to_string(),
        source: e,
    })?;

    let mut w = create(&tracks_path)?;
    let mut header: Vec<&str> = TRACKS_COLUMNS[..8].to_vec();
    header.extend(Slot::ALL.iter().map(|s| s.column()));
    header.push("laneId");
    w.write_record(&header).map_err(csv_err(&tracks_path))?;
    for t in recording.tracks() {
        write_track(&mut w, t).map_err(csv_err(&tracks_path))?;
    }
    w.flush().map_err(|e| DatasetError::Io {
        path: tracks_path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

fn write_track<W: Write>(w: &mut csv::Writer<W>, track: &Track) -> csv::Result<()> {
    let tm = &track.meta;
    let mut row: Vec<String> = Vec::with_capacity(17);
    for s in &track.states {
        row.clear();
        row.extend([
            s.frame.to_string(),
            s.vehicle_id.to_string(),
            s.bbox_x.to_string(),
            s.bbox_y.to_string(),
            tm.width.to_string(),
            tm.height.to_string(),
            s.x_velocity.to_string(),
            s.y_velocity.to_string(),
        ]);
        row.extend(
            Slot::ALL
                .iter()
                .map(|slot| s.surroundings.get(*slot).unwrap_or(0).to_string()),
        );
        row.push(s.lane_id.to_string());
        w.write_record(&row)?;
    }
    Ok(())
}
