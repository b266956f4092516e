//! Clip data model and on-disk formats.
//!
//! A corpus is a line-delimited manifest (one JSON object per clip) that
//! carries per-clip environment labels and CAN dynamics, plus two files per
//! clip: a binary feature file ([`features`]) and a line-delimited
//! detections file ([`detections`]). Paths in the manifest are resolved
//! relative to the manifest's directory.

pub mod detections;
pub mod features;
pub mod manifest;
pub mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detections::{load_detections, parse_detections, store_detections, write_detections, write_detections_file};
pub use features::{decode_features, encode_features, load_features, store_features, write_features_file};
pub use manifest::{load_manifest, store_manifest, write_manifest};
pub use validate::{validate_corpus, ValidationEntry, ValidationReport};

/// Ego position in the detection frame. Detections are ego-centric, so the
/// ego vehicle sits at the origin.
pub const EGO_POSITION: (f64, f64) = (0.0, 0.0);

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("duplicate clip id {0:?}")]
    DuplicateClipId(String),
    #[error("clip {0:?} has fewer than 2 frames")]
    ClipTooShort(String),
    #[error("unknown clip {0:?}")]
    UnknownClip(String),
    #[error("bad magic: expected SEADFEAT")]
    BadMagic,
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected end of file at byte offset {offset}")]
    UnexpectedEof { offset: usize },
    #[error("{trailing} trailing bytes after last frame")]
    TrailingBytes { trailing: usize },
    #[error("clip {clip_id:?}: expected {expected} frames, found {found}")]
    FrameCountMismatch {
        clip_id: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in frame {frame} ({role:?})")]
    NonFinite { frame: usize, role: ElementRole },
    #[error("invalid feature set: {0}")]
    InvalidFeatureSet(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Day,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Rainy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub clip_id: String,
    pub num_frames: usize,
    pub lighting: Lighting,
    pub weather: Weather,
}

/// Per-frame vehicle dynamics read off the CAN bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanTrace {
    pub clip_id: String,
    /// Lateral acceleration, m/s².
    pub accel_y: Vec<f64>,
    /// Signed yaw change per frame, radians.
    pub yaw_delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRole {
    Agent,
    Map,
}

/// A weighted set of `n` feature vectors of dimension `d`, stored row-major.
///
/// Values are kept as `f32` because that is what the feature file carries;
/// all distance computations promote to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    role: ElementRole,
    dim: usize,
    points: Vec<f32>,
    weights: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl FeatureSet {
    /// Builds a set with uniform weights `1/n`.
    pub fn new(role: ElementRole, dim: usize, points: Vec<f32>) -> Result<Self, CorpusError> {
        if dim == 0 {
            return Err(CorpusError::InvalidFeatureSet("dimension must be >= 1".into()));
        }
        if points.len() % dim != 0 {
            return Err(CorpusError::InvalidFeatureSet(format!(
                "{} values is not a multiple of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(CorpusError::InvalidFeatureSet("set must hold at least one element".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::InvalidFeatureSet("non-finite coordinate".into()));
        }
        Ok(Self {
            role,
            dim,
            points,
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Builds a set from explicit rows.
    pub fn from_rows(role: ElementRole, rows: &[Vec<f32>]) -> Result<Self, CorpusError> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(CorpusError::InvalidFeatureSet("ragged rows".into()));
        }
        Self::new(role, dim, rows.concat())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, CorpusError> {
        if weights.len() != self.len() {
            return Err(CorpusError::InvalidFeatureSet(format!(
                "{} weights for {} elements",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CorpusError::InvalidFeatureSet("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CorpusError::InvalidFeatureSet(format!("weights sum to {total}, not 1")));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn role(&self) -> ElementRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f32] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/n` exactly.
    pub fn has_uniform_weights(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| w == u)
    }

    pub(crate) fn weights_valid(&self) -> bool {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().all(|w| w.is_finite() && *w >= 0.0) && (total - 1.0).abs() <= WEIGHT_SUM_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub agents: FeatureSet,
    pub map: FeatureSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub frames: Vec<FrameFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn distance_to_ego(&self) -> f64 {
        (self.x - EGO_POSITION.0).hypot(self.y - EGO_POSITION.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub clip_id: String,
    pub frames: Vec<Vec<Detection>>,
}

/// One manifest entry: labels, dynamics, and where the per-clip files live.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub meta: ClipMeta,
    pub can: CanTrace,
    pub features_path: PathBuf,
    pub detections_path: PathBuf,
}

/// The unlabeled pool: every clip of a corpus keyed by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusIndex {
    root: PathBuf,
    clips: BTreeMap<String, ClipRecord>,
}

impl CorpusIndex {
    /// Builds an index rooted at `root`; relative file locators resolve
    /// against it.
    pub fn new(root: impl Into<PathBuf>, records: Vec<ClipRecord>) -> Result<Self, CorpusError> {
        let mut clips = BTreeMap::new();
        for rec in records {
            if rec.meta.num_frames < 2 {
                return Err(CorpusError::ClipTooShort(rec.meta.clip_id));
            }
            let id = rec.meta.clip_id.clone();
            if clips.insert(id.clone(), rec).is_some() {
                return Err(CorpusError::DuplicateClipId(id));
            }
        }
        Ok(Self {
            root: root.into(),
            clips,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Result<&ClipRecord, CorpusError> {
        self.clips
            .get(clip_id)
            .ok_or_else(|| CorpusError::UnknownClip(clip_id.to_string()))
    }

    /// Records in ascending clip-id order.
    pub fn records(&self) -> impl Iterator<Item = &ClipRecord> {
        self.clips.values()
    }

    pub fn clip_ids(&self) -> impl Iterator<Item = &str> {
        self.clips.keys().map(String::as_str)
    }

    pub fn total_frames(&self) -> usize {
        self.clips.values().map(|r| r.meta.num_frames).sum()
    }

    pub fn features_file(&self, clip_id: &str) -> Result<PathBuf, CorpusError> {
        Ok(self.root.join(&self.get(clip_id)?.features_path))
    }

    pub fn detections_file(&self, clip_id: &str) -> Result<PathBuf, CorpusError> {
        Ok(self.root.join(&self.get(clip_id)?.detections_path))
    }
}
