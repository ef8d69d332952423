//! On-disk layout of a raw session directory.
//!
//! ```text
//! session.json          {"id": "..."}                       (optional)
//! trajectories.jsonl    {"node","t","pose":[7],"cov_trace"}
//! detections.jsonl      {"node","t","tag_pose":[7]}
//! extrinsics.json       {"chest":[7],"hand":[7]}
//! markers.jsonl         {"t","distance_m"}
//! images/chest/<t>.*    opaque image files named by timestamp (optional)
//! images/hand/<t>.*
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, RawSession};
use crate::anchoring::{
    detection_records, split_records, trajectory_records, Extrinsics, StreamRecord, TagDetection, VioTrajectory,
};
use crate::geometry::{Pose3, Timestamped};
use crate::jsonl;

pub const TRAJECTORIES: &str = "trajectories.jsonl";
pub const DETECTIONS: &str = "detections.jsonl";
pub const EXTRINSICS: &str = "extrinsics.json";
pub const MARKERS: &str = "markers.jsonl";
pub const SESSION_META: &str = "session.json";
pub const GROUND_TRUTH: &str = "ground_truth.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerRecord {
    pub t: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionMeta {
    id: String,
}

/// A session as stored on disk, before the cross-node transform is known.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFiles {
    pub id: String,
    pub chest: VioTrajectory,
    pub hand: VioTrajectory,
    pub detections: Vec<TagDetection>,
    pub extrinsics: Extrinsics,
    pub markers: Vec<Timestamped<f64>>,
    pub chest_images: Vec<Timestamped<String>>,
    pub hand_images: Vec<Timestamped<String>>,
}

impl SessionFiles {
    pub fn into_raw(self, chest_world_from_hand_world: Pose3) -> RawSession {
        RawSession {
            id: self.id,
            chest: self.chest,
            hand: self.hand,
            extrinsics: self.extrinsics,
            chest_world_from_hand_world,
            markers: self.markers,
            chest_images: self.chest_images,
            hand_images: self.hand_images,
        }
    }
}

fn input_err(path: &Path, message: impl Into<String>) -> PipelineError {
    PipelineError::Input {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| input_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| input_err(path, e.to_string()))
}

fn read_images(dir: &Path) -> Result<Vec<Timestamped<String>>, PipelineError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| input_err(dir, e.to_string()))? {
        let path = entry.map_err(|e| input_err(dir, e.to_string()))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let t: f64 = stem
            .parse()
            .map_err(|_| input_err(&path, "image file name is not a timestamp"))?;
        out.push(Timestamped::new(t, path.display().to_string()));
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// Whether `dir` looks like a single session (has a trajectory file).
pub fn is_session_dir(dir: &Path) -> bool {
    dir.join(TRAJECTORIES).is_file()
}

/// Session directories under `root`: `root` itself if it is one, otherwise
/// its immediate subdirectories that are, sorted by name.
pub fn session_dirs(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if is_session_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| input_err(root, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_session_dir(p))
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn load_session_dir(dir: &Path) -> Result<SessionFiles, PipelineError> {
    let mut records: Vec<StreamRecord> = jsonl::read(&dir.join(TRAJECTORIES))?;
    let det_path = dir.join(DETECTIONS);
    if det_path.is_file() {
        records.extend(jsonl::read::<StreamRecord>(&det_path)?);
    }
    let (chest, hand, detections) = split_records(&records)?;
    let ext_path = dir.join(EXTRINSICS);
    if !ext_path.is_file() {
        return Err(input_err(&ext_path, "extrinsics file is missing"));
    }
    let extrinsics: Extrinsics = read_json(&ext_path)?;
    let markers: Vec<MarkerRecord> = jsonl::read(&dir.join(MARKERS))?;
    let markers: Vec<_> = markers
        .into_iter()
        .map(|m| Timestamped::new(m.t, m.distance_m))
        .collect();
    if !crate::geometry::strictly_increasing(&markers) {
        return Err(PipelineError::Unordered("markers"));
    }
    let meta_path = dir.join(SESSION_META);
    let id = if meta_path.is_file() {
        read_json::<SessionMeta>(&meta_path)?.id
    } else {
        dir.file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("session")
            .to_string()
    };
    Ok(SessionFiles {
        id,
        chest,
        hand,
        detections,
        extrinsics,
        markers,
        chest_images: read_images(&dir.join("images").join("chest"))?,
        hand_images: read_images(&dir.join("images").join("hand"))?,
    })
}

/// Writes everything but images.
pub fn write_session_dir(dir: &Path, s: &SessionFiles) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| input_err(dir, e.to_string()))?;
    write_json(&dir.join(SESSION_META), &SessionMeta { id: s.id.clone() })?;
    let mut traj = trajectory_records(&s.chest);
    traj.extend(trajectory_records(&s.hand));
    jsonl::write(&dir.join(TRAJECTORIES), &traj)?;
    jsonl::write(&dir.join(DETECTIONS), &detection_records(&s.detections))?;
    write_json(&dir.join(EXTRINSICS), &s.extrinsics)?;
    let markers: Vec<_> = s
        .markers
        .iter()
        .map(|m| MarkerRecord {
            t: m.t,
            distance_m: m.value,
        })
        .collect();
    jsonl::write(&dir.join(MARKERS), &markers)?;
    Ok(())
}
