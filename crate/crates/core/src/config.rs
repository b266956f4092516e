//! Flat key-value configuration files (TOML syntax).
//!
//! A loop file names the fields of [`LoopConfig`] and its nested shift and
//! key-frame settings at top level:
//!
//! ```toml
//! total_budget_clips = 30
//! per_iter_clips = 10
//! iterations = 3
//! lambda = "1/3"
//! engine = "centroid"
//! theta_tau = 0.5
//! theta_d = 5.0
//! fallback = "full-clip"
//! seed = 0
//! ```
//!
//! Omitted keys keep their defaults; unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::active::LoopConfig;
use crate::keyframe::{Fallback, KeyframeConfig};
use crate::shift::{Engine, ShiftConfig};
use crate::synth::SynthConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: &'static str, message: String },
}

/// Parses `"0.25"` or a fraction such as `"1/3"`.
pub fn parse_ratio(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            n / d
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s:?}"))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Ratio {
    Number(f64),
    Text(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LoopFile {
    total_budget_clips: Option<usize>,
    per_iter_clips: Option<usize>,
    iterations: Option<usize>,
    lambda: Option<Ratio>,
    engine: Option<String>,
    reduce_dim: Option<usize>,
    projection_seed: Option<u64>,
    sinkhorn_epsilon: Option<f64>,
    sinkhorn_max_iter: Option<usize>,
    sinkhorn_tol: Option<f64>,
    z_normalize: Option<bool>,
    theta_tau: Option<f64>,
    theta_d: Option<f64>,
    fallback: Option<String>,
    seed: Option<u64>,
}

impl LoopFile {
    fn into_config(self) -> Result<LoopConfig, ConfigError> {
        let d = LoopConfig::default();
        let lambda = match self.lambda {
            None => d.lambda,
            Some(Ratio::Number(x)) => x,
            Some(Ratio::Text(s)) => parse_ratio(&s).map_err(|message| ConfigError::BadValue { key: "lambda", message })?,
        };
        let engine = match self.engine {
            None => d.shift.engine,
            Some(s) => s
                .parse::<Engine>()
                .map_err(|message| ConfigError::BadValue { key: "engine", message })?,
        };
        let fallback = match self.fallback {
            None => d.keyframe.fallback,
            Some(s) => s
                .parse::<Fallback>()
                .map_err(|message| ConfigError::BadValue { key: "fallback", message })?,
        };
        Ok(LoopConfig {
            total_budget_clips: self.total_budget_clips.unwrap_or(d.total_budget_clips),
            per_iter_clips: self.per_iter_clips.unwrap_or(d.per_iter_clips),
            iterations: self.iterations.unwrap_or(d.iterations),
            lambda,
            shift: ShiftConfig {
                engine,
                reduce_dim: self.reduce_dim.or(d.shift.reduce_dim),
                projection_seed: self.projection_seed.unwrap_or(d.shift.projection_seed),
                sinkhorn_epsilon: self.sinkhorn_epsilon.unwrap_or(d.shift.sinkhorn_epsilon),
                sinkhorn_max_iter: self.sinkhorn_max_iter.unwrap_or(d.shift.sinkhorn_max_iter),
                sinkhorn_tol: self.sinkhorn_tol.unwrap_or(d.shift.sinkhorn_tol),
                z_normalize: self.z_normalize.unwrap_or(d.shift.z_normalize),
            },
            keyframe: KeyframeConfig {
                confidence_threshold: self.theta_tau.unwrap_or(d.keyframe.confidence_threshold),
                distance_threshold: self.theta_d.unwrap_or(d.keyframe.distance_threshold),
                fallback,
            },
            seed: self.seed.unwrap_or(d.seed),
        })
    }
}

pub fn parse_loop_config(text: &str) -> Result<LoopConfig, ConfigError> {
    let file: LoopFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    file.into_config()
}

pub fn parse_synth_config(text: &str) -> Result<SynthConfig, ConfigError> {
    let cfg: SynthConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate().map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_loop_config(path: &Path) -> Result<LoopConfig, ConfigError> {
    parse_loop_config(&read(path)?)
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig, ConfigError> {
    parse_synth_config(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert_eq!(parse_ratio("1/3").unwrap(), 1.0 / 3.0);
        assert_eq!(parse_ratio(" 0.25 ").unwrap(), 0.25);
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("abc").is_err());
    }

    #[test]
    fn empty_loop_file_is_default() {
        assert_eq!(parse_loop_config("").unwrap(), LoopConfig::default());
    }

    #[test]
    fn loop_file_fields() {
        let cfg = parse_loop_config(
            "lambda = \"1/4\"\nengine = \"exact\"\nreduce_dim = 8\ntheta_d = 7.5\nfallback = \"min-distance-frame\"\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.lambda, 0.25);
        assert_eq!(cfg.shift.engine, Engine::Exact);
        assert_eq!(cfg.shift.reduce_dim, Some(8));
        assert_eq!(cfg.keyframe.distance_threshold, 7.5);
        assert_eq!(cfg.keyframe.fallback, Fallback::MinDistanceFrame);
        assert_eq!(cfg.seed, 9);
        assert_eq!(parse_loop_config("lambda = 0.5").unwrap().lambda, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_loop_config("budget = 3").is_err());
        assert!(parse_synth_config("clips = 3").is_err());
        assert!(matches!(
            parse_loop_config("engine = \"fast\""),
            Err(ConfigError::BadValue { key: "engine", .. })
        ));
    }

    #[test]
    fn synth_file_fields() {
        let cfg = parse_synth_config("num_clips = 50\nagents_per_frame = [2, 3]\nseed = 4\n").unwrap();
        assert_eq!(cfg.num_clips, 50);
        assert_eq!(cfg.agents_per_frame, (2, 3));
        assert_eq!(cfg.frames_per_clip, SynthConfig::default().frames_per_clip);
    }
}
