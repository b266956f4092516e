use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::FeatureSet;

use super::ShiftError;

/// Fixed `k × d` random sign matrix with entries `±1/√k`.
///
/// The matrix depends only on `(seed, d, k)`, so every frame of every clip
/// is projected by the same map and shifts stay comparable. Squared norms
/// are preserved in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignProjection {
    input_dim: usize,
    output_dim: usize,
    matrix: Vec<f64>,
}

impl SignProjection {
    pub fn new(seed: u64, input_dim: usize, output_dim: usize) -> Result<Self, ShiftError> {
        if output_dim == 0 || output_dim >= input_dim {
            return Err(ShiftError::BadTargetDim {
                target: output_dim,
                dim: input_dim,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((input_dim as u64) << 32) | output_dim as u64);
        let scale = 1.0 / (output_dim as f64).sqrt();
        let matrix = (0..input_dim * output_dim)
            .map(|_| if rng.random::<bool>() { scale } else { -scale })
            .collect();
        Ok(Self {
            input_dim,
            output_dim,
            matrix,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn project_point(&self, x: &[f32]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim);
        self.matrix
            .chunks_exact(self.input_dim)
            .map(|row| row.iter().zip(x).map(|(r, v)| r * f64::from(*v)).sum())
            .collect()
    }

    /// Projects every element; weights and role are kept.
    pub fn apply(&self, set: &FeatureSet) -> Result<FeatureSet, ShiftError> {
        if set.dim() != self.input_dim {
            return Err(ShiftError::DimensionMismatch {
                left: set.dim(),
                right: self.input_dim,
            });
        }
        let points: Vec<f32> = (0..set.len())
            .flat_map(|i| self.project_point(set.point(i)))
            .map(|v| v as f32)
            .collect();
        let out = FeatureSet::new(set.role(), self.output_dim, points).map_err(|_| ShiftError::InvalidWeights)?;
        out.with_weights(set.weights().to_vec()).map_err(|_| ShiftError::InvalidWeights)
    }
}
