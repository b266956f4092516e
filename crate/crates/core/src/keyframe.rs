//! Key frames: frames where a confidently detected road participant is
//! close to the ego vehicle. Within a selected clip only the longest run of
//! consecutive key frames is sent for labeling.

use serde::{Deserialize, Serialize};

use crate::corpus::{Detection, DetectionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Label the whole clip.
    #[default]
    FullClip,
    /// Label the single frame whose nearest confident detection is closest.
    MinDistanceFrame,
}

impl std::str::FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-clip" | "full_clip" => Ok(Self::FullClip),
            "min-distance-frame" | "min_distance_frame" => Ok(Self::MinDistanceFrame),
            other => Err(format!("unknown fallback {other:?} (expected full-clip or min-distance-frame)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeConfig {
    /// Detections below this confidence are ignored.
    pub confidence_threshold: f64,
    /// A frame is key when the nearest kept detection is strictly closer
    /// than this, in meters.
    pub distance_threshold: f64,
    pub fallback: Fallback,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            distance_threshold: 5.0,
            fallback: Fallback::FullClip,
        }
    }
}

/// Inclusive frame interval chosen for labeling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub clip_id: String,
    pub start: usize,
    pub end: usize,
    pub is_fallback: bool,
}

impl FrameRange {
    pub fn full(clip_id: &str, num_frames: usize) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            start: 0,
            end: num_frames.saturating_sub(1),
            is_fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Distance to the nearest detection at or above the confidence threshold.
pub fn nearest_confident(detections: &[Detection], confidence_threshold: f64) -> Option<f64> {
    detections
        .iter()
        .filter(|d| d.confidence >= confidence_threshold)
        .map(Detection::distance_to_ego)
        .min_by(f64::total_cmp)
}

pub fn frame_is_key(detections: &[Detection], cfg: &KeyframeConfig) -> bool {
    nearest_confident(detections, cfg.confidence_threshold).is_some_and(|d| d < cfg.distance_threshold)
}

pub fn key_mask(detections: &DetectionSet, cfg: &KeyframeConfig) -> Vec<bool> {
    detections.frames.iter().map(|f| frame_is_key(f, cfg)).collect()
}

/// Inclusive bounds of the longest run of `true`; the earliest on ties.
pub fn longest_run(mask: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &key) in mask.iter().chain(std::iter::once(&false)).enumerate() {
        match (key, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - s > be + 1 - bs) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

pub fn select_keyframes(detections: &DetectionSet, cfg: &KeyframeConfig) -> FrameRange {
    let id = detections.clip_id.as_str();
    let t = detections.frames.len();
    if let Some((start, end)) = longest_run(&key_mask(detections, cfg)) {
        return FrameRange {
            clip_id: id.to_string(),
            start,
            end,
            is_fallback: false,
        };
    }
    let (start, end) = match cfg.fallback {
        Fallback::FullClip => (0, t.saturating_sub(1)),
        Fallback::MinDistanceFrame => {
            let mut best = (0, f64::INFINITY);
            for (k, frame) in detections.frames.iter().enumerate() {
                if let Some(d) = nearest_confident(frame, cfg.confidence_threshold) {
                    if d < best.1 {
                        best = (k, d);
                    }
                }
            }
            (best.0, best.0)
        }
    };
    FrameRange {
        clip_id: id.to_string(),
        start,
        end,
        is_fallback: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, confidence: f64) -> Detection {
        Detection {
            class: "car".into(),
            x,
            y,
            confidence,
        }
    }

    #[test]
    fn boundary_distance_is_not_key() {
        let cfg = KeyframeConfig::default();
        assert!(!frame_is_key(&[det(3.0, 4.0, 0.9)], &cfg));
        assert!(frame_is_key(&[det(3.0, 3.0, 0.9)], &cfg));
        assert!(!frame_is_key(&[det(1.0, 1.0, 0.3)], &cfg));
        assert!(!frame_is_key(&[], &cfg));
    }

    #[test]
    fn confidence_boundary_is_kept() {
        let cfg = KeyframeConfig::default();
        assert!(frame_is_key(&[det(1.0, 0.0, 0.5)], &cfg));
    }

    #[test]
    fn nearest_of_many_decides() {
        let cfg = KeyframeConfig::default();
        let frame = [det(30.0, 0.0, 0.9), det(0.0, -2.0, 0.6), det(0.5, 0.0, 0.1)];
        assert!(frame_is_key(&frame, &cfg));
        assert_eq!(nearest_confident(&frame, 0.5), Some(2.0));
    }

    #[test]
    fn mask_examples() {
        let cfg = KeyframeConfig::default();
        let empty = DetectionSet {
            clip_id: "c".into(),
            frames: vec![vec![]; 4],
        };
        assert_eq!(key_mask(&empty, &cfg), vec![false; 4]);
        let near = DetectionSet {
            clip_id: "c".into(),
            frames: vec![vec![det(0.0, 1.0, 1.0)]; 4],
        };
        assert_eq!(key_mask(&near, &cfg), vec![true; 4]);
    }

    fn mask(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn longest_run_examples() {
        assert_eq!(longest_run(&mask(&[0, 1, 1, 0, 1, 1, 1, 0])), Some((4, 6)));
        assert_eq!(longest_run(&mask(&[1, 1, 0, 1, 1])), Some((0, 1)));
        assert_eq!(longest_run(&mask(&[0, 0])), None);
        assert_eq!(longest_run(&[]), None);
        assert_eq!(longest_run(&mask(&[1, 1, 1])), Some((0, 2)));
        assert_eq!(longest_run(&mask(&[0, 0, 1])), Some((2, 2)));
    }

    fn clip_from_distances(distances: &[Option<f64>]) -> DetectionSet {
        DetectionSet {
            clip_id: "c".into(),
            frames: distances
                .iter()
                .map(|d| d.map(|d| vec![det(d, 0.0, 0.9)]).unwrap_or_default())
                .collect(),
        }
    }

    #[test]
    fn select_run() {
        let set = clip_from_distances(&[Some(9.0), Some(1.0), Some(2.0), Some(3.0), Some(8.0)]);
        let r = select_keyframes(&set, &KeyframeConfig::default());
        assert_eq!((r.start, r.end, r.is_fallback), (1, 3, false));
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn full_clip_fallback() {
        let set = clip_from_distances(&[Some(9.0), None, Some(7.0), Some(6.0), Some(8.0)]);
        let r = select_keyframes(&set, &KeyframeConfig::default());
        assert_eq!((r.start, r.end, r.is_fallback), (0, 4, true));
    }

    #[test]
    fn min_distance_fallback() {
        let cfg = KeyframeConfig {
            fallback: Fallback::MinDistanceFrame,
            ..KeyframeConfig::default()
        };
        let set = clip_from_distances(&[Some(9.0), Some(6.0), Some(7.0)]);
        let r = select_keyframes(&set, &cfg);
        assert_eq!((r.start, r.end, r.is_fallback), (1, 1, true));
        // frames without a confident detection rank last; ties go to the earliest
        let set = clip_from_distances(&[None, Some(6.0), Some(6.0)]);
        assert_eq!(select_keyframes(&set, &cfg).start, 1);
        let set = clip_from_distances(&[None, None]);
        assert_eq!(select_keyframes(&set, &cfg).start, 0);
    }

    #[test]
    fn fallback_parses() {
        assert_eq!("full-clip".parse::<Fallback>().unwrap(), Fallback::FullClip);
        assert_eq!("min-distance-frame".parse::<Fallback>().unwrap(), Fallback::MinDistanceFrame);
        assert!("none".parse::<Fallback>().is_err());
    }
}
