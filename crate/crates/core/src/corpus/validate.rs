use serde::{Deserialize, Serialize};

use super::{load_detections, load_features, CanTrace, ClipRecord, CorpusIndex, DetectionSet};

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub clip_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame: Option<usize>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

fn entry(clip_id: &str, frame: Option<usize>, field: &str, message: impl Into<String>) -> ValidationEntry {
    ValidationEntry {
        clip_id: clip_id.to_string(),
        frame,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Checks every clip and every referenced file. Violations are collected,
/// never raised; the report is empty iff the corpus is consistent.
pub fn validate_corpus(index: &CorpusIndex) -> ValidationReport {
    let mut entries = Vec::new();
    for rec in index.records() {
        check_record(index, rec, &mut entries);
    }
    ValidationReport { entries }
}

fn check_record(index: &CorpusIndex, rec: &ClipRecord, out: &mut Vec<ValidationEntry>) {
    let id = rec.meta.clip_id.as_str();
    let t = rec.meta.num_frames;
    if t < 2 {
        out.push(entry(id, None, "num_frames", format!("{t} frames, need at least 2")));
    }
    out.extend(can_violations(&rec.can, id, t));
    if let Err(e) = load_features(index, id) {
        out.push(entry(id, None, "features", e.to_string()));
    }
    match load_detections(index, id) {
        Ok(set) => out.extend(detection_violations(&set, t)),
        Err(e) => out.push(entry(id, None, "detections", e.to_string())),
    }
}

pub(crate) fn can_violations(can: &CanTrace, clip_id: &str, t: usize) -> Vec<ValidationEntry> {
    let mut out = Vec::new();
    if can.clip_id != clip_id {
        out.push(entry(clip_id, None, "can.clip_id", format!("trace belongs to {:?}", can.clip_id)));
    }
    for (field, series) in [("accel_y", &can.accel_y), ("yaw_delta", &can.yaw_delta)] {
        if series.len() != t {
            out.push(entry(clip_id, None, field, format!("length {} != num_frames {t}", series.len())));
        } else if let Some(k) = series.iter().position(|v| !v.is_finite()) {
            out.push(entry(clip_id, Some(k), field, "non-finite value"));
        }
    }
    out
}

/// Range checks for a detection set against the clip's frame count.
pub fn detection_violations(set: &DetectionSet, t: usize) -> Vec<ValidationEntry> {
    let id = set.clip_id.as_str();
    let mut out = Vec::new();
    if set.frames.len() != t {
        out.push(entry(
            id,
            None,
            "detections",
            format!("{} frames, expected {t}", set.frames.len()),
        ));
    }
    for (k, dets) in set.frames.iter().enumerate() {
        if dets.iter().any(|d| !(0.0..=1.0).contains(&d.confidence)) {
            out.push(entry(id, Some(k), "confidence", "confidence outside [0, 1]"));
        }
        if dets.iter().any(|d| !d.x.is_finite() || !d.y.is_finite()) {
            out.push(entry(id, Some(k), "position", "non-finite position"));
        }
    }
    out
}
