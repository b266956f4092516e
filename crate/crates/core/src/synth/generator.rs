//! Seeded synthetic corpora with a hidden per-clip difficulty.
//!
//! Difficulty is drawn from a Beta distribution skewed toward easy clips.
//! It then drives, through separate couplings:
//!
//! * how far the agent and map feature sets drift between frames
//!   (`dynamics_coupling`, also scaling the CAN traces),
//! * how close the nearest road user comes to the ego vehicle
//!   (`proximity_coupling`),
//! * how likely the clip is to be recorded at night or in rain
//!   (`night_rain_bias`).
//!
//! Setting a coupling to zero removes its dependence on difficulty.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::active::{Learner, LearnerError};
use crate::corpus::detections::write_detections_file;
use crate::corpus::features::write_features_file;
use crate::corpus::{
    manifest::store_manifest, CanTrace, ClipFeatures, ClipMeta, ClipRecord, CorpusError, CorpusIndex, Detection,
    DetectionSet, ElementRole, FeatureSet, FrameFeatures, Lighting, Weather,
};
use crate::keyframe::FrameRange;

use super::proxy::{proxy_train, ProxyLearner};
use super::SynthError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_clips: usize,
    /// 40 frames is about 20 s at 2 Hz.
    pub frames_per_clip: usize,
    pub feature_dim: usize,
    /// Inclusive range for the number of agents in a clip.
    pub agents_per_frame: (usize, usize),
    pub map_elements: usize,
    pub difficulty_alpha: f64,
    pub difficulty_beta: f64,
    pub dynamics_coupling: f64,
    pub proximity_coupling: f64,
    pub night_rain_bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_clips: 200,
            frames_per_clip: 40,
            feature_dim: 16,
            agents_per_frame: (4, 12),
            map_elements: 6,
            difficulty_alpha: 1.0,
            difficulty_beta: 4.0,
            dynamics_coupling: 1.0,
            proximity_coupling: 1.0,
            night_rain_bias: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.num_clips == 0 {
            return bad("num_clips must be positive");
        }
        if self.frames_per_clip < 2 {
            return bad("frames_per_clip must be at least 2");
        }
        if self.feature_dim == 0 || self.map_elements == 0 {
            return bad("feature_dim and map_elements must be positive");
        }
        let (lo, hi) = self.agents_per_frame;
        if lo == 0 || lo > hi {
            return bad("agents_per_frame must be a nonempty range of positive counts");
        }
        if !(self.difficulty_alpha > 0.0 && self.difficulty_beta > 0.0)
            || !self.difficulty_alpha.is_finite()
            || !self.difficulty_beta.is_finite()
        {
            return bad("difficulty shape parameters must be positive and finite");
        }
        for (name, v) in [
            ("dynamics_coupling", self.dynamics_coupling),
            ("proximity_coupling", self.proximity_coupling),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::InvalidConfig(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(0.0..=1.0).contains(&self.night_rain_bias) {
            return bad("night_rain_bias must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A generated corpus held in memory, with the hidden difficulties.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub index: CorpusIndex,
    pub features: BTreeMap<String, ClipFeatures>,
    pub detections: BTreeMap<String, DetectionSet>,
    truth: BTreeMap<String, f64>,
}

impl SyntheticCorpus {
    /// Hidden difficulty per clip. Never written to disk.
    pub fn truth(&self) -> &BTreeMap<String, f64> {
        &self.truth
    }

    /// Writes manifest, feature and detection files under `dir` and
    /// returns the index loaded from there.
    pub fn materialize(&self, dir: &Path) -> Result<CorpusIndex, CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let index = CorpusIndex::new(dir, self.index.records().cloned().collect())?;
        for (id, f) in &self.features {
            write_features_file(&index.features_file(id)?, f)?;
        }
        for (id, d) in &self.detections {
            write_detections_file(&index.detections_file(id)?, d)?;
        }
        store_manifest(&dir.join(MANIFEST_NAME), &index)?;
        Ok(index)
    }
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Serves inference from an in-memory synthetic corpus; training fits the
/// nearest-neighbor proxy on the hidden difficulties of the labeled clips.
pub struct SyntheticLearner<'a> {
    pub corpus: &'a SyntheticCorpus,
}

impl Learner for SyntheticLearner<'_> {
    type Model = ProxyLearner;

    fn train_from_scratch(&self, labeled: &[FrameRange], _seed: u64) -> Result<ProxyLearner, LearnerError> {
        proxy_train(labeled, self.corpus.truth()).map_err(|e| LearnerError(e.to_string()))
    }

    fn infer_features(&self, _model: &ProxyLearner, clip_id: &str) -> Result<ClipFeatures, LearnerError> {
        self.corpus
            .features
            .get(clip_id)
            .cloned()
            .ok_or_else(|| LearnerError(format!("no features for {clip_id:?}")))
    }

    fn infer_detections(&self, _model: &ProxyLearner, clip_id: &str) -> Result<DetectionSet, LearnerError> {
        self.corpus
            .detections
            .get(clip_id)
            .cloned()
            .ok_or_else(|| LearnerError(format!("no detections for {clip_id:?}")))
    }

    fn reentrant(&self) -> bool {
        true
    }
}

const BASE_DRIFT: f64 = 0.1;
const DRIFT_PER_DIFFICULTY: f64 = 1.0;
const BASE_JITTER: f64 = 0.05;
const JITTER_PER_DIFFICULTY: f64 = 0.15;
const BASE_ACCEL_SD: f64 = 0.3;
const ACCEL_SD_PER_DIFFICULTY: f64 = 2.0;
const BASE_YAW_SD: f64 = 0.01;
const YAW_SD_PER_DIFFICULTY: f64 = 0.08;
const APPROACH_FAR: f64 = 20.0;
const APPROACH_NEAR: f64 = 12.0;
/// Chance of night (and, independently, of rain) with no bias.
const BASE_ADVERSE: f64 = 0.25;
/// With full bias the chance rises linearly and saturates at this difficulty.
const ADVERSE_SATURATION: f64 = 0.4;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * normal(rng)).collect()
}

struct Walk {
    points: Vec<Vec<f64>>,
}

impl Walk {
    fn new(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Self {
        Self {
            points: (0..n).map(|_| normal_vec(rng, d, 1.0)).collect(),
        }
    }

    /// Shared drift for the whole set plus independent jitter per element.
    fn step(&mut self, rng: &mut ChaCha8Rng, drift: f64, jitter: f64) {
        let d = self.points[0].len();
        let shared = normal_vec(rng, d, drift);
        for p in &mut self.points {
            for (k, v) in p.iter_mut().enumerate() {
                *v += shared[k] + jitter * normal(rng);
            }
        }
    }

    fn snapshot(&self, role: ElementRole) -> FeatureSet {
        let d = self.points[0].len();
        let flat = self.points.iter().flatten().map(|&v| v as f32).collect();
        FeatureSet::new(role, d, flat).expect("walk points are finite and nonempty")
    }
}

fn clip_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

struct GeneratedClip {
    record: ClipRecord,
    features: ClipFeatures,
    detections: DetectionSet,
    difficulty: f64,
}

fn generate_clip(cfg: &SynthConfig, k: usize, beta: &Beta<f64>) -> GeneratedClip {
    let mut rng = clip_rng(cfg.seed, k);
    let id = format!("clip{k:05}");
    let t = cfg.frames_per_clip;
    let difficulty: f64 = beta.sample(&mut rng);

    let b = cfg.night_rain_bias;
    let p_adverse = (1.0 - b) * BASE_ADVERSE + b * (difficulty / ADVERSE_SATURATION).min(1.0);
    let lighting = if rng.random_bool(p_adverse) { Lighting::Night } else { Lighting::Day };
    let weather = if rng.random_bool(p_adverse) { Weather::Rainy } else { Weather::Sunny };

    let dyn_level = cfg.dynamics_coupling * difficulty;
    let accel_sd = BASE_ACCEL_SD + ACCEL_SD_PER_DIFFICULTY * dyn_level;
    let yaw_sd = BASE_YAW_SD + YAW_SD_PER_DIFFICULTY * dyn_level;
    let accel_y = (0..t).map(|_| accel_sd * normal(&mut rng)).collect();
    let yaw_delta = (0..t).map(|_| yaw_sd * normal(&mut rng)).collect();

    let (lo, hi) = cfg.agents_per_frame;
    let n_agents = rng.random_range(lo..=hi);
    let drift = BASE_DRIFT + DRIFT_PER_DIFFICULTY * dyn_level;
    let jitter = BASE_JITTER + JITTER_PER_DIFFICULTY * dyn_level;
    let mut agents = Walk::new(&mut rng, n_agents, cfg.feature_dim);
    let mut map = Walk::new(&mut rng, cfg.map_elements, cfg.feature_dim);
    let mut frames = Vec::with_capacity(t);
    for step in 0..t {
        if step > 0 {
            agents.step(&mut rng, drift, jitter);
            map.step(&mut rng, 0.5 * drift, 0.5 * jitter);
        }
        frames.push(FrameFeatures {
            agents: agents.snapshot(ElementRole::Agent),
            map: map.snapshot(ElementRole::Map),
        });
    }

    // One agent makes a close approach; its nearest distance shrinks with
    // difficulty. The others stay in the background.
    let closest = APPROACH_NEAR * (1.0 - 0.85 * (cfg.proximity_coupling * difficulty).min(1.0));
    let center = rng.random_range(t as f64 * 0.25..t as f64 * 0.75);
    let half_width = rng.random_range(3.0..(t as f64 / 4.0).max(3.5));
    let approach_conf = rng.random_range(0.55..1.0);
    let background: Vec<(f64, f64, f64)> = (1..n_agents)
        .map(|_| {
            (
                rng.random_range(8.0..40.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let classes = ["car", "truck", "pedestrian", "bicycle"];
    let detections = (0..t)
        .map(|step| {
            let u = ((step as f64 - center) / half_width).powi(2).min(1.0);
            let r = (closest + (APPROACH_FAR - closest) * u + 0.3 * normal(&mut rng)).max(0.5);
            let mut dets = vec![Detection {
                class: "car".into(),
                x: r * heading.cos(),
                y: r * heading.sin(),
                confidence: approach_conf,
            }];
            for (j, &(radius, angle, conf)) in background.iter().enumerate() {
                let r = (radius + 0.5 * normal(&mut rng)).max(6.0);
                let a = angle + 0.02 * step as f64;
                dets.push(Detection {
                    class: classes[j % classes.len()].into(),
                    x: r * a.cos(),
                    y: r * a.sin(),
                    confidence: conf,
                });
            }
            dets
        })
        .collect();

    GeneratedClip {
        record: ClipRecord {
            meta: ClipMeta {
                clip_id: id.clone(),
                num_frames: t,
                lighting,
                weather,
            },
            can: CanTrace {
                clip_id: id.clone(),
                accel_y,
                yaw_delta,
            },
            features_path: PathBuf::from("features").join(format!("{id}.bin")),
            detections_path: PathBuf::from("detections").join(format!("{id}.jsonl")),
        },
        features: ClipFeatures {
            clip_id: id.clone(),
            frames,
        },
        detections: DetectionSet {
            clip_id: id.clone(),
            frames: detections,
        },
        difficulty,
    }
}

/// Generates a corpus in memory. Each clip draws from its own stream of the
/// seeded generator, so the output depends only on the configuration.
pub fn synthesize(cfg: &SynthConfig) -> Result<SyntheticCorpus, SynthError> {
    cfg.validate()?;
    let beta = Beta::new(cfg.difficulty_alpha, cfg.difficulty_beta)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let mut records = Vec::with_capacity(cfg.num_clips);
    let mut features = BTreeMap::new();
    let mut detections = BTreeMap::new();
    let mut truth = BTreeMap::new();
    for k in 0..cfg.num_clips {
        let clip = generate_clip(cfg, k, &beta);
        let id = clip.record.meta.clip_id.clone();
        truth.insert(id.clone(), clip.difficulty);
        features.insert(id.clone(), clip.features);
        detections.insert(id, clip.detections);
        records.push(clip.record);
    }
    let index = CorpusIndex::new(PathBuf::new(), records).map_err(SynthError::Corpus)?;
    Ok(SyntheticCorpus {
        index,
        features,
        detections,
        truth,
    })
}

/// Generates a corpus and writes it under `dir`. The returned index points
/// at the written files; the hidden difficulties stay in memory.
pub fn generate_corpus(cfg: &SynthConfig, dir: &Path) -> Result<(CorpusIndex, SyntheticCorpus), SynthError> {
    let corpus = synthesize(cfg)?;
    let index = corpus.materialize(dir).map_err(SynthError::Corpus)?;
    Ok((index, corpus))
}
