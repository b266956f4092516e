//! The selection loop.
//!
//! Iteration 0 draws whole clips from the twelve-cell partition. Every later
//! iteration asks the model trained on everything labeled so far for
//! features and detections on the residual pool, ranks the residual clips
//! by accumulated feature shift, takes the top `n_itr`, and labels only the
//! longest key-frame run of each. The model is retrained from scratch after
//! each iteration; the last training yields the final handle.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_detections, load_features, ClipFeatures, CorpusError, CorpusIndex, DetectionSet};
use crate::keyframe::{select_keyframes, FrameRange, KeyframeConfig};
use crate::partition::{build_partition, initial_select, PartitionError};
use crate::shift::{rank_by_score, scene_shift, selection_scores, SceneShift, ShiftConfig, ShiftError};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("learner failure: {0}")]
pub struct LearnerError(pub String);

impl From<CorpusError> for LearnerError {
    fn from(e: CorpusError) -> Self {
        Self(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("pool of {available} clips cannot supply {requested}")]
    InsufficientPool { requested: usize, available: usize },
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// The model-side operations the loop needs from its host.
///
/// `infer_*` must be deterministic for a given model and clip, and
/// `train_from_scratch` must depend only on the labeled ranges and the seed.
pub trait Learner: Sync {
    type Model: Sync;

    fn train_from_scratch(&self, labeled: &[FrameRange], seed: u64) -> Result<Self::Model, LearnerError>;

    fn infer_features(&self, model: &Self::Model, clip_id: &str) -> Result<ClipFeatures, LearnerError>;

    fn infer_detections(&self, model: &Self::Model, clip_id: &str) -> Result<DetectionSet, LearnerError>;

    /// Whether `infer_*` may run on several threads at once. The loop
    /// serializes inference otherwise.
    fn reentrant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Stop once this many clips are labeled.
    pub total_budget_clips: usize,
    pub per_iter_clips: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub shift: ShiftConfig,
    pub keyframe: KeyframeConfig,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            total_budget_clips: 30,
            per_iter_clips: 10,
            iterations: 3,
            lambda: 1.0 / 3.0,
            shift: ShiftConfig::default(),
            keyframe: KeyframeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedClip {
    pub clip_id: String,
    pub start: usize,
    pub end: usize,
    pub is_fallback: bool,
    /// Accumulated shift; absent for the initial draw.
    pub fs_total: Option<f64>,
}

impl SelectedClip {
    pub fn range(&self) -> FrameRange {
        FrameRange {
            clip_id: self.clip_id.clone(),
            start: self.start,
            end: self.end,
            is_fallback: self.is_fallback,
        }
    }

    pub fn frames(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub selected: Vec<SelectedClip>,
    pub pool_size_before: usize,
    pub labeled_clips_after: usize,
    pub labeled_frames_after: usize,
}

/// What happened, one record per completed iteration. `invalid` is set when
/// the run aborted; the records before the abort are kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionLog {
    pub iterations: Vec<IterationRecord>,
    pub invalid: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LogLine {
    Iteration(IterationRecord),
    Aborted { invalid: String },
}

impl SelectionLog {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }

    pub fn selected(&self) -> impl Iterator<Item = &SelectedClip> {
        self.iterations.iter().flat_map(|r| r.selected.iter())
    }

    pub fn labeled_ranges(&self) -> Vec<FrameRange> {
        self.selected().map(SelectedClip::range).collect()
    }

    /// One JSON object per iteration, then an `{"invalid": ...}` line if the
    /// run aborted.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.iterations {
            out.push_str(&serde_json::to_string(rec).expect("log records serialize"));
            out.push('\n');
        }
        if let Some(msg) = &self.invalid {
            out.push_str(&serde_json::to_string(&LogLine::Aborted { invalid: msg.clone() }).expect("serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut log = SelectionLog::default();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine = serde_json::from_str(raw).map_err(|e| CorpusError::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            match line {
                LogLine::Iteration(rec) => log.iterations.push(rec),
                LogLine::Aborted { invalid } => log.invalid = Some(invalid),
            }
        }
        Ok(log)
    }
}

/// The log plus the model trained on the final labeled set.
#[derive(Debug)]
pub struct LoopOutcome<M> {
    pub log: SelectionLog,
    pub model: Option<M>,
}

fn iteration_seed(seed: u64, itr: usize) -> u64 {
    seed.wrapping_add((itr as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn run_active_loop<L: Learner>(
    corpus: &CorpusIndex,
    learner: &L,
    cfg: &LoopConfig,
) -> Result<LoopOutcome<L::Model>, LoopError> {
    run_active_loop_observed(corpus, learner, cfg, |_, _| {})
}

/// Same as [`run_active_loop`], calling `on_trained(record, model)` after
/// every retraining.
pub fn run_active_loop_observed<L: Learner>(
    corpus: &CorpusIndex,
    learner: &L,
    cfg: &LoopConfig,
    mut on_trained: impl FnMut(&IterationRecord, &L::Model),
) -> Result<LoopOutcome<L::Model>, LoopError> {
    if cfg.per_iter_clips == 0 || cfg.iterations == 0 || cfg.total_budget_clips == 0 {
        return Err(LoopError::InvalidConfig(
            "budget, per-iteration count and iterations must be positive".into(),
        ));
    }
    let wanted = cfg.total_budget_clips.min(cfg.per_iter_clips.saturating_mul(cfg.iterations));
    if corpus.len() < wanted {
        return Err(LoopError::InsufficientPool {
            requested: wanted,
            available: corpus.len(),
        });
    }

    let mut log = SelectionLog::default();
    let mut chosen: BTreeSet<String> = BTreeSet::new();
    let mut labeled: Vec<FrameRange> = Vec::new();
    let mut labeled_frames = 0usize;
    let mut model: Option<L::Model> = None;

    for itr in 0..cfg.iterations {
        let quota = cfg.per_iter_clips.min(cfg.total_budget_clips - chosen.len());
        if quota == 0 {
            break;
        }
        let pool: Vec<&str> = corpus.clip_ids().filter(|id| !chosen.contains(*id)).collect();
        let pool_size_before = pool.len();

        let selected = match &model {
            None => {
                let table = build_partition(corpus, cfg.lambda)?;
                initial_select(&table, quota, cfg.seed)?
                    .into_iter()
                    .map(|id| {
                        let t = corpus.get(&id).expect("selected from corpus").meta.num_frames;
                        let r = FrameRange::full(&id, t);
                        SelectedClip {
                            clip_id: id,
                            start: r.start,
                            end: r.end,
                            is_fallback: false,
                            fs_total: None,
                        }
                    })
                    .collect::<Vec<_>>()
            }
            Some(m) => match select_incremental(learner, m, &pool, quota, cfg) {
                Ok(sel) => sel,
                Err(msg) => {
                    log.invalid = Some(format!("iteration {itr}: {msg}"));
                    return Ok(LoopOutcome { log, model: None });
                }
            },
        };

        for s in &selected {
            chosen.insert(s.clip_id.clone());
            labeled_frames += s.frames();
            labeled.push(s.range());
        }
        let record = IterationRecord {
            iter: itr,
            selected,
            pool_size_before,
            labeled_clips_after: chosen.len(),
            labeled_frames_after: labeled_frames,
        };

        match learner.train_from_scratch(&labeled, iteration_seed(cfg.seed, itr)) {
            Ok(m) => {
                on_trained(&record, &m);
                model = Some(m);
            }
            Err(e) => {
                log.iterations.push(record);
                log.invalid = Some(format!("iteration {itr}: {e}"));
                return Ok(LoopOutcome { log, model: None });
            }
        }
        log.iterations.push(record);
    }
    Ok(LoopOutcome { log, model })
}

#[derive(Debug, Error)]
enum StepError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
}

fn score_clip<L: Learner>(learner: &L, model: &L::Model, id: &str, cfg: &ShiftConfig) -> Result<SceneShift, StepError> {
    let features = learner.infer_features(model, id)?;
    Ok(scene_shift(&features, cfg)?)
}

fn select_incremental<L: Learner>(
    learner: &L,
    model: &L::Model,
    pool: &[&str],
    quota: usize,
    cfg: &LoopConfig,
) -> Result<Vec<SelectedClip>, String> {
    // `pool` is in ascending id order; both paths keep that order.
    let shifts: Vec<SceneShift> = if learner.reentrant() {
        pool.par_iter()
            .map(|id| score_clip(learner, model, id, &cfg.shift))
            .collect::<Result<_, _>>()
    } else {
        pool.iter()
            .map(|id| score_clip(learner, model, id, &cfg.shift))
            .collect::<Result<_, _>>()
    }
    .map_err(|e| e.to_string())?;

    let scores = selection_scores(&shifts, cfg.shift.z_normalize);
    let top = rank_by_score(&scores, quota).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(top.len());
    for id in top {
        let fs = shifts.iter().find(|s| s.clip_id == id).map(|s| s.total);
        let detections = learner.infer_detections(model, &id).map_err(|e| e.to_string())?;
        let r = select_keyframes(&detections, &cfg.keyframe);
        out.push(SelectedClip {
            clip_id: id,
            start: r.start,
            end: r.end,
            is_fallback: r.is_fallback,
            fs_total: fs,
        });
    }
    Ok(out)
}

/// Clip-level and frame-level share of the corpus that a log labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub selected_clips: usize,
    pub corpus_clips: usize,
    pub clip_fraction: f64,
    pub selected_frames: usize,
    pub corpus_frames: usize,
    pub frame_fraction: f64,
}

pub fn budget_report(log: &SelectionLog, corpus: &CorpusIndex) -> BudgetReport {
    let selected_clips = log.selected().count();
    let selected_frames: usize = log.selected().map(SelectedClip::frames).sum();
    let corpus_clips = corpus.len();
    let corpus_frames = corpus.total_frames();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    BudgetReport {
        selected_clips,
        corpus_clips,
        clip_fraction: frac(selected_clips, corpus_clips),
        selected_frames,
        corpus_frames,
        frame_fraction: frac(selected_frames, corpus_frames),
    }
}

/// A learner whose inference reads the corpus files directly. Training
/// only records how much is labeled, so the loop can run against any
/// manifest without a model in the loop.
pub struct CorpusLearner<'a> {
    pub corpus: &'a CorpusIndex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusModel {
    pub labeled_clips: usize,
    pub labeled_frames: usize,
}

impl Learner for CorpusLearner<'_> {
    type Model = CorpusModel;

    fn train_from_scratch(&self, labeled: &[FrameRange], _seed: u64) -> Result<CorpusModel, LearnerError> {
        Ok(CorpusModel {
            labeled_clips: labeled.len(),
            labeled_frames: labeled.iter().map(FrameRange::len).sum(),
        })
    }

    fn infer_features(&self, _model: &CorpusModel, clip_id: &str) -> Result<ClipFeatures, LearnerError> {
        Ok(load_features(self.corpus, clip_id)?)
    }

    fn infer_detections(&self, _model: &CorpusModel, clip_id: &str) -> Result<DetectionSet, LearnerError> {
        Ok(load_detections(self.corpus, clip_id)?)
    }

    fn reentrant(&self) -> bool {
        true
    }
}
