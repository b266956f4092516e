//! Nearest-neighbor stand-in for a trained driving model.
//!
//! The proxy "knows" the hidden difficulty of every labeled clip and
//! answers a query difficulty with the nearest labeled one. Its error on a
//! clip is therefore the distance from that clip to the closest labeled
//! example: a direct measure of how well the labeled set covers the
//! difficulty range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::keyframe::FrameRange;

use super::SynthError;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyLearner {
    /// `(difficulty, labeled frames)`, sorted by difficulty, one per clip.
    samples: Vec<(f64, usize)>,
}

impl ProxyLearner {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Labeled frames behind the sample at `difficulty`, if any.
    pub fn weight_of(&self, difficulty: f64) -> Option<usize> {
        self.samples.iter().find(|s| s.0 == difficulty).map(|s| s.1)
    }

    /// Nearest labeled difficulty. Equidistant neighbors resolve to the one
    /// backed by more labeled frames, then to the smaller difficulty.
    pub fn predict(&self, query: f64) -> f64 {
        let pos = self.samples.partition_point(|s| s.0 < query);
        let mut best: Option<(f64, usize)> = None;
        for cand in [pos.checked_sub(1), Some(pos)].into_iter().flatten() {
            if let Some(&(d, w)) = self.samples.get(cand) {
                best = match best {
                    None => Some((d, w)),
                    Some((bd, bw)) => {
                        let (da, db) = ((d - query).abs(), (bd - query).abs());
                        if da < db || (da == db && w > bw) {
                            Some((d, w))
                        } else {
                            Some((bd, bw))
                        }
                    }
                };
            }
        }
        best.map(|b| b.0).expect("trained learner holds at least one sample")
    }
}

/// Fits the proxy on labeled ranges. A clip labeled more than once keeps
/// its largest range.
pub fn proxy_train(labeled: &[FrameRange], truth: &BTreeMap<String, f64>) -> Result<ProxyLearner, SynthError> {
    if labeled.is_empty() {
        return Err(SynthError::EmptyLabeledSet);
    }
    let mut per_clip: BTreeMap<&str, usize> = BTreeMap::new();
    for r in labeled {
        let w = per_clip.entry(&r.clip_id).or_default();
        *w = (*w).max(r.len());
    }
    let mut samples = Vec::with_capacity(per_clip.len());
    for (id, w) in per_clip {
        let d = *truth.get(id).ok_or_else(|| SynthError::UnknownClip(id.to_string()))?;
        samples.push((d, w));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    Ok(ProxyLearner { samples })
}

/// How clips are weighted when averaging the proxy error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalWeighting {
    /// Every clip counts the same.
    Uniform,
    /// Difficulty is cut into this many equal-width bins on [0, 1]; every
    /// nonempty bin carries the same total weight, shared by its clips.
    /// Rare hard clips then count as much as the common easy ones.
    #[default]
    DifficultyBalanced,
}

impl std::str::FromStr for EvalWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "difficulty-balanced" | "difficulty_balanced" => Ok(Self::DifficultyBalanced),
            other => Err(format!("unknown weighting {other:?} (expected uniform or difficulty-balanced)")),
        }
    }
}

pub const BALANCE_BINS: usize = 10;

pub fn eval_weights(truth: &BTreeMap<String, f64>, weighting: EvalWeighting) -> BTreeMap<String, f64> {
    match weighting {
        EvalWeighting::Uniform => truth.keys().map(|k| (k.clone(), 1.0)).collect(),
        EvalWeighting::DifficultyBalanced => {
            let bin = |d: f64| ((d * BALANCE_BINS as f64) as usize).min(BALANCE_BINS - 1);
            let mut counts = [0usize; BALANCE_BINS];
            for &d in truth.values() {
                counts[bin(d)] += 1;
            }
            truth
                .iter()
                .map(|(k, &d)| (k.clone(), 1.0 / counts[bin(d)] as f64))
                .collect()
        }
    }
}

/// Weighted mean absolute error of the proxy's difficulty prediction.
/// Clips absent from `weights` do not count.
pub fn proxy_error(learner: &ProxyLearner, truth: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (id, &w) in weights {
        if w <= 0.0 {
            continue;
        }
        if let Some(&d) = truth.get(id) {
            num += w * (learner.predict(d) - d).abs();
            den += w;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
