//! Feature shift between consecutive frames and its accumulation per clip.
//!
//! A frame carries two weighted point sets, one for agents and one for map
//! elements. The shift of a set between frames `t-1` and `t` is a transport
//! distance between the two sets under the Euclidean ground metric; the
//! clip's score is the sum of agent and map shifts over all consecutive
//! pairs. Clips with the largest score are the most eventful and are
//! proposed for labeling first.
//!
//! Three engines compute the per-set distance:
//!
//! * [`Engine::Exact`]: the earth mover's distance, solved exactly as a
//!   transportation problem.
//! * [`Engine::Sinkhorn`]: entropic approximation; returns the transport
//!   term of the regularized plan.
//! * [`Engine::Centroid`]: distance between weighted means. For equal total
//!   mass this never exceeds the exact distance, by convexity of the norm.

mod projection;
mod sinkhorn;
mod transport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClipFeatures, FeatureSet, FrameFeatures};

pub use projection::SignProjection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("weights must be nonnegative and sum to 1")]
    InvalidWeights,
    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NonConvergence { violation: f64, iterations: usize },
    #[error("target dimension {target} must be in 1..{dim}")]
    BadTargetDim { target: usize, dim: usize },
    #[error("clip {0:?} has fewer than 2 frames")]
    ClipTooShort(String),
    #[error("requested {requested} clips from a pool of {available}")]
    BudgetExceedsPool { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Sinkhorn,
    #[default]
    Centroid,
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "sinkhorn" => Ok(Self::Sinkhorn),
            "centroid" => Ok(Self::Centroid),
            other => Err(format!("unknown engine {other:?} (expected exact, sinkhorn or centroid)")),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Sinkhorn => "sinkhorn",
            Self::Centroid => "centroid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub engine: Engine,
    /// Project both sets to this many dimensions before measuring.
    pub reduce_dim: Option<usize>,
    pub projection_seed: u64,
    /// Entropic regularization as a multiple of the mean ground cost.
    pub sinkhorn_epsilon: f64,
    pub sinkhorn_max_iter: usize,
    /// Stop once the L1 row-marginal violation drops below this.
    pub sinkhorn_tol: f64,
    /// Standardize agent and map totals across the pool before summing
    /// them for ranking. Off by default: the raw sum is the clip score.
    pub z_normalize: bool,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            engine: Engine::default(),
            reduce_dim: None,
            projection_seed: 0,
            sinkhorn_epsilon: 0.01,
            sinkhorn_max_iter: 10_000,
            sinkhorn_tol: 1e-4,
            z_normalize: false,
        }
    }
}

/// Per-pair shifts of one clip and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneShift {
    pub clip_id: String,
    /// `(agent, map)` shift for frame pairs `(0,1), (1,2), ...`.
    pub per_frame: Vec<(f64, f64)>,
    pub total: f64,
}

impl SceneShift {
    pub fn agent_total(&self) -> f64 {
        self.per_frame.iter().map(|p| p.0).sum()
    }

    pub fn map_total(&self) -> f64 {
        self.per_frame.iter().map(|p| p.1).sum()
    }
}

fn check_pair(a: &FeatureSet, b: &FeatureSet) -> Result<(), ShiftError> {
    if a.dim() != b.dim() {
        return Err(ShiftError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if !a.weights_valid() || !b.weights_valid() {
        return Err(ShiftError::InvalidWeights);
    }
    Ok(())
}

fn euclidean(x: &[f32], y: &[f32]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(p, q)| {
            let d = f64::from(*p) - f64::from(*q);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Ground costs between the positive-mass elements of `a` and `b`,
/// together with those masses.
fn ground_costs(a: &FeatureSet, b: &FeatureSet) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.weights()[j] > 0.0).collect();
    let mut cost = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            cost.push(euclidean(a.point(i), b.point(j)));
        }
    }
    let wa = rows.iter().map(|&i| a.weights()[i]).collect();
    let wb = cols.iter().map(|&j| b.weights()[j]).collect();
    (wa, wb, cost)
}

/// Exact earth mover's distance with Euclidean ground cost.
pub fn emd_exact(a: &FeatureSet, b: &FeatureSet) -> Result<f64, ShiftError> {
    check_pair(a, b)?;
    if a.has_uniform_weights() && b.has_uniform_weights() {
        // Integer masses m per row and n per column make every augmentation
        // exact; divide by the total mass n*m at the end.
        let (n, m) = (a.len(), b.len());
        let mut cost = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                cost.push(euclidean(a.point(i), b.point(j)));
            }
        }
        let total = transport::min_cost_transport(&vec![m as f64; n], &vec![n as f64; m], &cost);
        return Ok(total / (n * m) as f64);
    }
    let (wa, wb, cost) = ground_costs(a, b);
    Ok(transport::min_cost_transport(&wa, &wb, &cost))
}

/// Entropic approximation of [`emd_exact`].
pub fn emd_sinkhorn(a: &FeatureSet, b: &FeatureSet, cfg: &ShiftConfig) -> Result<f64, ShiftError> {
    check_pair(a, b)?;
    let (wa, wb, cost) = ground_costs(a, b);
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    if mean_cost == 0.0 {
        return Ok(0.0);
    }
    let epsilon = cfg.sinkhorn_epsilon * mean_cost;
    let run = sinkhorn::sinkhorn_log(&wa, &wb, &cost, epsilon, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol);
    if !run.converged {
        return Err(ShiftError::NonConvergence {
            violation: run.violation,
            iterations: run.iterations,
        });
    }
    Ok(run.cost)
}

fn weighted_mean(s: &FeatureSet) -> Vec<f64> {
    let mut c = vec![0.0; s.dim()];
    for (i, w) in s.weights().iter().enumerate() {
        for (acc, v) in c.iter_mut().zip(s.point(i)) {
            *acc += w * f64::from(*v);
        }
    }
    c
}

/// Distance between the weighted centroids of two sets.
pub fn centroid_shift(a: &FeatureSet, b: &FeatureSet) -> Result<f64, ShiftError> {
    if a.dim() != b.dim() {
        return Err(ShiftError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let ca = weighted_mean(a);
    let cb = weighted_mean(b);
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Applies the configured projection, or returns the set unchanged when
/// no target dimension is set.
pub fn reduce_dim(f: &FeatureSet, cfg: &ShiftConfig) -> Result<FeatureSet, ShiftError> {
    match cfg.reduce_dim {
        None => Ok(f.clone()),
        Some(k) => SignProjection::new(cfg.projection_seed, f.dim(), k)?.apply(f),
    }
}

/// Distance between two sets under the configured engine, no projection.
pub fn set_distance(a: &FeatureSet, b: &FeatureSet, cfg: &ShiftConfig) -> Result<f64, ShiftError> {
    match cfg.engine {
        Engine::Exact => emd_exact(a, b),
        Engine::Sinkhorn => emd_sinkhorn(a, b, cfg),
        Engine::Centroid => centroid_shift(a, b),
    }
}

/// Projections for one clip, built once so every frame shares them.
struct Reducers {
    agents: Option<SignProjection>,
    map: Option<SignProjection>,
}

impl Reducers {
    fn for_frame(frame: &FrameFeatures, cfg: &ShiftConfig) -> Result<Self, ShiftError> {
        let make = |d: usize| {
            cfg.reduce_dim
                .map(|k| SignProjection::new(cfg.projection_seed, d, k))
                .transpose()
        };
        Ok(Self {
            agents: make(frame.agents.dim())?,
            map: make(frame.map.dim())?,
        })
    }

    fn shift(&self, cur: &FrameFeatures, prev: &FrameFeatures, cfg: &ShiftConfig) -> Result<(f64, f64), ShiftError> {
        let one = |proj: &Option<SignProjection>, a: &FeatureSet, b: &FeatureSet| match proj {
            Some(p) => set_distance(&p.apply(a)?, &p.apply(b)?, cfg),
            None => set_distance(a, b, cfg),
        };
        Ok((
            one(&self.agents, &cur.agents, &prev.agents)?,
            one(&self.map, &cur.map, &prev.map)?,
        ))
    }
}

/// `(agent shift, map shift)` between two frames.
pub fn frame_shift(cur: &FrameFeatures, prev: &FrameFeatures, cfg: &ShiftConfig) -> Result<(f64, f64), ShiftError> {
    Reducers::for_frame(prev, cfg)?.shift(cur, prev, cfg)
}

/// Sums frame shifts over the `T-1` consecutive pairs of a clip. The first
/// frame has no predecessor and contributes nothing.
pub fn scene_shift(features: &ClipFeatures, cfg: &ShiftConfig) -> Result<SceneShift, ShiftError> {
    if features.frames.len() < 2 {
        return Err(ShiftError::ClipTooShort(features.clip_id.clone()));
    }
    let reducers = Reducers::for_frame(&features.frames[0], cfg)?;
    let per_frame = features
        .frames
        .windows(2)
        .map(|w| reducers.shift(&w[1], &w[0], cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let total = per_frame.iter().map(|(a, m)| a + m).sum();
    Ok(SceneShift {
        clip_id: features.clip_id.clone(),
        per_frame,
        total,
    })
}

/// Ids of the `n` highest-scoring entries, descending, ties by ascending id.
pub fn rank_by_score(scores: &[(String, f64)], n: usize) -> Result<Vec<String>, ShiftError> {
    if n > scores.len() {
        return Err(ShiftError::BudgetExceedsPool {
            requested: n,
            available: scores.len(),
        });
    }
    let mut order: Vec<&(String, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(order.into_iter().take(n).map(|(id, _)| id.clone()).collect())
}

/// The `n` clips with the largest total shift.
pub fn rank_clips(shifts: &[SceneShift], n: usize) -> Result<Vec<String>, ShiftError> {
    let scores: Vec<(String, f64)> = shifts.iter().map(|s| (s.clip_id.clone(), s.total)).collect();
    rank_by_score(&scores, n)
}

/// Ranking scores for a pool. With `z_normalize`, agent and map totals are
/// each standardized across the pool before being added.
pub fn selection_scores(shifts: &[SceneShift], z_normalize: bool) -> Vec<(String, f64)> {
    if !z_normalize {
        return shifts.iter().map(|s| (s.clip_id.clone(), s.total)).collect();
    }
    let standardize = |xs: Vec<f64>| -> Vec<f64> {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        xs.into_iter()
            .map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 })
            .collect()
    };
    let agent = standardize(shifts.iter().map(SceneShift::agent_total).collect());
    let map = standardize(shifts.iter().map(SceneShift::map_total).collect());
    shifts
        .iter()
        .zip(agent.iter().zip(&map))
        .map(|(s, (a, m))| (s.clip_id.clone(), a + m))
        .collect()
}
