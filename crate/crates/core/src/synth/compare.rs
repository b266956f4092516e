//! Budget sweep: selection policy vs. random labeling on fresh corpora.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{run_active_loop_observed, LoopConfig};
use crate::keyframe::FrameRange;

use super::generator::{synthesize, SynthConfig, SyntheticLearner};
use super::proxy::{eval_weights, proxy_error, proxy_train, EvalWeighting};
use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Sead,
    Random,
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sead" => Ok(Self::Sead),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// Error of one policy at one budget on one corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget_clips: usize,
    pub error: f64,
    pub error_uniform: f64,
    pub frame_fraction: f64,
}

/// Aggregate over seeds for one policy at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: Policy,
    pub engine: String,
    pub budget_clips: usize,
    pub budget_fraction: f64,
    pub seeds: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_error_uniform: f64,
    pub std_error_uniform: f64,
    pub mean_frame_fraction: f64,
    /// Per-seed errors under the report's weighting, in seed order.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub weighting: EvalWeighting,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, policy: Policy, budget_clips: usize) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.budget_clips == budget_clips)
    }

    /// Rows for one policy, budgets ascending.
    pub fn series(&self, policy: Policy) -> Vec<&ComparisonRow> {
        let mut rows: Vec<&ComparisonRow> = self.rows.iter().filter(|r| r.policy == policy).collect();
        rows.sort_by_key(|r| r.budget_clips);
        rows
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }
}

/// Clip counts labeled after each iteration of the schedule.
pub fn budget_schedule(cfg: &LoopConfig) -> Vec<usize> {
    let mut out = Vec::new();
    let mut total = 0;
    for _ in 0..cfg.iterations {
        let q = cfg.per_iter_clips.min(cfg.total_budget_clips - total);
        if q == 0 {
            break;
        }
        total += q;
        out.push(total);
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every policy on `num_seeds` corpora. Run `s` uses corpus seed
/// `synth.seed + s` and loop seed `loop_cfg.seed + s`.
pub fn compare_policies(
    synth: &SynthConfig,
    loop_cfg: &LoopConfig,
    policies: &[Policy],
    num_seeds: usize,
    weighting: EvalWeighting,
) -> Result<ComparisonReport, SynthError> {
    if num_seeds == 0 {
        return Err(SynthError::InvalidConfig("num_seeds must be positive".into()));
    }
    let schedule = budget_schedule(loop_cfg);
    let per_seed: Vec<Vec<(Policy, Vec<BudgetPoint>)>> = (0..num_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let synth = SynthConfig {
                seed: synth.seed.wrapping_add(s),
                ..synth.clone()
            };
            let cfg = LoopConfig {
                seed: loop_cfg.seed.wrapping_add(s),
                ..loop_cfg.clone()
            };
            run_seed(&synth, &cfg, policies, &schedule, weighting)
        })
        .collect::<Result<_, _>>()?;

    let n = synth.num_clips as f64;
    let mut rows = Vec::new();
    for &policy in policies {
        for (b, &budget) in schedule.iter().enumerate() {
            let points: Vec<BudgetPoint> = per_seed
                .iter()
                .map(|runs| runs.iter().find(|r| r.0 == policy).expect("policy ran").1[b])
                .collect();
            let errors: Vec<f64> = points.iter().map(|p| p.error).collect();
            let uniform: Vec<f64> = points.iter().map(|p| p.error_uniform).collect();
            let frames: Vec<f64> = points.iter().map(|p| p.frame_fraction).collect();
            let (mean_error, std_error) = mean_std(&errors);
            let (mean_error_uniform, std_error_uniform) = mean_std(&uniform);
            rows.push(ComparisonRow {
                policy,
                engine: loop_cfg.shift.engine.to_string(),
                budget_clips: budget,
                budget_fraction: budget as f64 / n,
                seeds: num_seeds,
                mean_error,
                std_error,
                mean_error_uniform,
                std_error_uniform,
                mean_frame_fraction: mean_std(&frames).0,
                errors,
            });
        }
    }
    Ok(ComparisonReport { weighting, rows })
}

fn run_seed(
    synth: &SynthConfig,
    cfg: &LoopConfig,
    policies: &[Policy],
    schedule: &[usize],
    weighting: EvalWeighting,
) -> Result<Vec<(Policy, Vec<BudgetPoint>)>, SynthError> {
    let corpus = synthesize(synth)?;
    let truth = corpus.truth();
    let weights = eval_weights(truth, weighting);
    let uniform = eval_weights(truth, EvalWeighting::Uniform);
    let total_frames = corpus.index.total_frames() as f64;
    let mut out = Vec::new();
    for &policy in policies {
        let points = match policy {
            Policy::Sead => {
                let learner = SyntheticLearner { corpus: &corpus };
                let mut points = Vec::new();
                let outcome = run_active_loop_observed(&corpus.index, &learner, cfg, |rec, model| {
                    points.push(BudgetPoint {
                        budget_clips: rec.labeled_clips_after,
                        error: proxy_error(model, truth, &weights),
                        error_uniform: proxy_error(model, truth, &uniform),
                        frame_fraction: rec.labeled_frames_after as f64 / total_frames,
                    });
                })?;
                if let Some(msg) = outcome.log.invalid {
                    return Err(SynthError::InvalidConfig(format!("selection run aborted: {msg}")));
                }
                points
            }
            Policy::Random => {
                let mut ids: Vec<&str> = corpus.index.clip_ids().collect();
                ids.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
                let mut points = Vec::new();
                for &budget in schedule {
                    let labeled: Vec<FrameRange> = ids[..budget]
                        .iter()
                        .map(|id| FrameRange::full(id, corpus.index.get(id).expect("listed").meta.num_frames))
                        .collect();
                    let model = proxy_train(&labeled, truth)?;
                    let frames: usize = labeled.iter().map(FrameRange::len).sum();
                    points.push(BudgetPoint {
                        budget_clips: budget,
                        error: proxy_error(&model, truth, &weights),
                        error_uniform: proxy_error(&model, truth, &uniform),
                        frame_fraction: frames as f64 / total_frames,
                    });
                }
                points
            }
        };
        debug_assert_eq!(points.iter().map(|p| p.budget_clips).collect::<Vec<_>>(), schedule);
        out.push((policy, points));
    }
    Ok(out)
}
