//! Binary feature file.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic   b"SEADFEAT"
//! u32     version (= 1)
//! u32     T, number of frames
//! T × {
//!     u32 n_agent, u32 d_agent, f32[n_agent * d_agent]   row-major
//!     u32 n_map,   u32 d_map,   f32[n_map * d_map]       row-major
//! }
//! ```
//!
//! Weights are not stored; decoded sets carry uniform weights.

use std::path::Path;

use super::{io_err, ClipFeatures, CorpusError, CorpusIndex, ElementRole, FeatureSet, FrameFeatures};

pub const MAGIC: &[u8; 8] = b"SEADFEAT";
pub const VERSION: u32 = 1;

pub fn encode_features(features: &ClipFeatures) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(features.frames.len() as u32).to_le_bytes());
    for frame in &features.frames {
        for set in [&frame.agents, &frame.map] {
            out.extend_from_slice(&(set.len() as u32).to_le_bytes());
            out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
            for v in set.points() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CorpusError::UnexpectedEof {
                offset: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a feature file. When `expected_frames` is given, the header's
/// frame count must match it.
pub fn decode_features(
    bytes: &[u8],
    clip_id: &str,
    expected_frames: Option<usize>,
) -> Result<ClipFeatures, CorpusError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(CorpusError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CorpusError::UnsupportedVersion(version));
    }
    let t = cur.u32()? as usize;
    if let Some(expected) = expected_frames {
        if t != expected {
            return Err(CorpusError::FrameCountMismatch {
                clip_id: clip_id.to_string(),
                expected,
                found: t,
            });
        }
    }
    let mut frames = Vec::with_capacity(t.min(1 << 16));
    let mut dims: [Option<usize>; 2] = [None, None];
    for frame in 0..t {
        let mut sets = Vec::with_capacity(2);
        for (slot, role) in [ElementRole::Agent, ElementRole::Map].into_iter().enumerate() {
            let n = cur.u32()? as usize;
            let d = cur.u32()? as usize;
            let count = n.checked_mul(d).ok_or(CorpusError::UnexpectedEof { offset: bytes.len() })?;
            let raw = cur.take(count.checked_mul(4).ok_or(CorpusError::UnexpectedEof { offset: bytes.len() })?)?;
            let points: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if points.iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite { frame, role });
            }
            match dims[slot] {
                Some(prev) if prev != d => {
                    return Err(CorpusError::InvalidFeatureSet(format!(
                        "frame {frame}: {role:?} dimension changes from {prev} to {d}"
                    )))
                }
                _ => dims[slot] = Some(d),
            }
            let set = FeatureSet::new(role, d, points)
                .map_err(|e| CorpusError::InvalidFeatureSet(format!("frame {frame} {role:?}: {e}")))?;
            sets.push(set);
        }
        let map = sets.pop().expect("two sets");
        let agents = sets.pop().expect("two sets");
        frames.push(FrameFeatures { agents, map });
    }
    if cur.pos != bytes.len() {
        return Err(CorpusError::TrailingBytes {
            trailing: bytes.len() - cur.pos,
        });
    }
    Ok(ClipFeatures {
        clip_id: clip_id.to_string(),
        frames,
    })
}

pub fn load_features(index: &CorpusIndex, clip_id: &str) -> Result<ClipFeatures, CorpusError> {
    let expected = index.get(clip_id)?.meta.num_frames;
    let path = index.features_file(clip_id)?;
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    decode_features(&bytes, clip_id, Some(expected))
}

pub fn store_features(index: &CorpusIndex, features: &ClipFeatures) -> Result<(), CorpusError> {
    let path = index.features_file(&features.clip_id)?;
    write_features_file(&path, features)
}

pub fn write_features_file(path: &Path, features: &ClipFeatures) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, encode_features(features)).map_err(io_err(path))
}
