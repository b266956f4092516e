//! Line-delimited detections: one `{"frame_idx": k, "detections": [...]}`
//! record per frame, frames in order.
//!
//! Parsing is structural only. Range checks (confidence in `[0, 1]`, finite
//! positions, frame count) are reported by [`super::validate_corpus`].

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, CorpusError, CorpusIndex, Detection, DetectionSet};

#[derive(Debug, Serialize, Deserialize)]
struct FrameLine {
    frame_idx: usize,
    detections: Vec<Detection>,
}

pub fn parse_detections(text: &str, clip_id: &str) -> Result<DetectionSet, CorpusError> {
    let mut frames = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: FrameLine = serde_json::from_str(raw).map_err(|e| CorpusError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.frame_idx != frames.len() {
            return Err(CorpusError::MalformedLine {
                line: i + 1,
                message: format!("frame_idx {} out of order, expected {}", rec.frame_idx, frames.len()),
            });
        }
        frames.push(rec.detections);
    }
    Ok(DetectionSet {
        clip_id: clip_id.to_string(),
        frames,
    })
}

pub fn write_detections<W: Write>(set: &DetectionSet, mut out: W) -> std::io::Result<()> {
    for (frame_idx, dets) in set.frames.iter().enumerate() {
        serde_json::to_writer(
            &mut out,
            &FrameLine {
                frame_idx,
                detections: dets.clone(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_detections(index: &CorpusIndex, clip_id: &str) -> Result<DetectionSet, CorpusError> {
    let path = index.detections_file(clip_id)?;
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    parse_detections(&text, clip_id)
}

pub fn store_detections(index: &CorpusIndex, set: &DetectionSet) -> Result<(), CorpusError> {
    let path = index.detections_file(&set.clip_id)?;
    write_detections_file(&path, set)
}

pub fn write_detections_file(path: &Path, set: &DetectionSet) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut buf = Vec::new();
    write_detections(set, &mut buf).map_err(io_err(path))?;
    std::fs::write(path, buf).map_err(io_err(path))
}
