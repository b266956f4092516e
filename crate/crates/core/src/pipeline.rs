//! Corpus-level stages, one per command-line subcommand, plus the
//! line-delimited record formats they read and write.

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active::{LoopError, SelectionLog};
use crate::corpus::{load_detections, load_features, CorpusError, CorpusIndex};
use crate::keyframe::{select_keyframes, FrameRange, KeyframeConfig};
use crate::partition::{build_partition, initial_select, PartitionError};
use crate::shift::{rank_by_score, scene_shift, selection_scores, SceneShift, ShiftConfig, ShiftError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
}

/// One line of a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub clip_id: String,
    pub fs_total: f64,
    pub fs_agent_total: f64,
    pub fs_map_total: f64,
}

impl From<&SceneShift> for ShiftRecord {
    fn from(s: &SceneShift) -> Self {
        Self {
            clip_id: s.clip_id.clone(),
            fs_total: s.total,
            fs_agent_total: s.agent_total(),
            fs_map_total: s.map_total(),
        }
    }
}

/// Serializes each item on its own line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("record types serialize") + "\n")
        .collect()
}

/// Parses one item per nonblank line.
pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::BadRecord {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Clip ids, one per nonblank line.
pub fn parse_id_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn resolve_ids(index: &CorpusIndex, ids: Option<&[String]>) -> Result<Vec<String>, CorpusError> {
    match ids {
        None => Ok(index.clip_ids().map(str::to_string).collect()),
        Some(ids) => {
            let mut out = Vec::with_capacity(ids.len());
            for id in ids {
                index.get(id)?;
                out.push(id.clone());
            }
            out.sort();
            out.dedup();
            Ok(out)
        }
    }
}

/// Scene shift of every listed clip (all clips when `ids` is `None`),
/// sorted by clip id.
pub fn score_corpus(index: &CorpusIndex, ids: Option<&[String]>, cfg: &ShiftConfig) -> Result<Vec<SceneShift>, PipelineError> {
    resolve_ids(index, ids)?
        .par_iter()
        .map(|id| {
            let feats = load_features(index, id)?;
            Ok(scene_shift(&feats, cfg)?)
        })
        .collect()
}

/// Key-frame range of every listed clip, sorted by clip id.
pub fn keyframe_corpus(index: &CorpusIndex, ids: Option<&[String]>, cfg: &KeyframeConfig) -> Result<Vec<FrameRange>, PipelineError> {
    resolve_ids(index, ids)?
        .par_iter()
        .map(|id| Ok(select_keyframes(&load_detections(index, id)?, cfg)))
        .collect()
}

/// Stratified first-round pick: whole clips, sorted by id.
pub fn select_initial(index: &CorpusIndex, lambda: f64, n: usize, seed: u64) -> Result<Vec<String>, PipelineError> {
    let table = build_partition(index, lambda)?;
    Ok(initial_select(&table, n, seed)?)
}

/// Top `n` of a scores file, highest first.
pub fn select_ranked(records: &[ShiftRecord], n: usize) -> Result<Vec<String>, PipelineError> {
    let scores: Vec<(String, f64)> = records.iter().map(|r| (r.clip_id.clone(), r.fs_total)).collect();
    Ok(rank_by_score(&scores, n)?)
}

/// Top `n` of full shift results, with optional per-channel standardization.
pub fn select_from_shifts(shifts: &[SceneShift], n: usize, z_normalize: bool) -> Result<Vec<String>, PipelineError> {
    Ok(rank_by_score(&selection_scores(shifts, z_normalize), n)?)
}

/// Parses a selection log, mapping syntax problems to a pipeline error.
pub fn parse_log(text: &str) -> Result<SelectionLog, PipelineError> {
    Ok(SelectionLog::from_jsonl(text)?)
}
