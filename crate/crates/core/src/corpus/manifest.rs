//! Line-delimited manifest: one JSON object per clip.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{io_err, CanTrace, ClipMeta, ClipRecord, CorpusError, CorpusIndex, Lighting, Weather};

const REQUIRED: [&str; 8] = [
    "clip_id",
    "num_frames",
    "lighting",
    "weather",
    "accel_y",
    "yaw_delta",
    "features_path",
    "detections_path",
];

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    clip_id: String,
    num_frames: usize,
    lighting: Lighting,
    weather: Weather,
    accel_y: Vec<f64>,
    yaw_delta: Vec<f64>,
    features_path: PathBuf,
    detections_path: PathBuf,
}

/// Parses a manifest. Either every line parses or nothing is returned.
pub fn load_manifest(path: &Path) -> Result<CorpusIndex, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, root)
}

pub(crate) fn parse_manifest(text: &str, root: PathBuf) -> Result<CorpusIndex, CorpusError> {
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::MalformedLine {
            line,
            message: "record is not an object".into(),
        })?;
        if let Some(field) = REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
            return Err(CorpusError::MissingField { line, field });
        }
        let rec: ManifestLine = serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.clip_id.clone()) {
            return Err(CorpusError::DuplicateClipId(rec.clip_id));
        }
        if rec.num_frames < 2 {
            return Err(CorpusError::ClipTooShort(rec.clip_id));
        }
        records.push(ClipRecord {
            meta: ClipMeta {
                clip_id: rec.clip_id.clone(),
                num_frames: rec.num_frames,
                lighting: rec.lighting,
                weather: rec.weather,
            },
            can: CanTrace {
                clip_id: rec.clip_id,
                accel_y: rec.accel_y,
                yaw_delta: rec.yaw_delta,
            },
            features_path: rec.features_path,
            detections_path: rec.detections_path,
        });
    }
    CorpusIndex::new(root, records)
}

/// Serializes the index as manifest lines, sorted by clip id.
pub fn write_manifest<W: Write>(index: &CorpusIndex, mut out: W) -> std::io::Result<()> {
    for rec in index.records() {
        let line = ManifestLine {
            clip_id: rec.meta.clip_id.clone(),
            num_frames: rec.meta.num_frames,
            lighting: rec.meta.lighting,
            weather: rec.meta.weather,
            accel_y: rec.can.accel_y.clone(),
            yaw_delta: rec.can.yaw_delta.clone(),
            features_path: rec.features_path.clone(),
            detections_path: rec.detections_path.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn store_manifest(path: &Path, index: &CorpusIndex) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_manifest(index, &mut buf).map_err(io_err(path))?;
    std::fs::write(path, buf).map_err(io_err(path))
}
