use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Owen-scrambled Sobol points in `(0, 1)^dimension`, fixed by `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QmcSampler {
    pub dimension: usize,
    pub size: usize,
    pub seed: u32,
}

const MAX_POINTS: usize = 1 << 16;
const MAX_DIMENSION: usize = sobol_burley::NUM_DIMENSIONS as usize;

impl QmcSampler {
    pub fn new(dimension: usize, size: usize, seed: u32) -> Result<Self> {
        if size == 0 || size > MAX_POINTS {
            return Err(Error::InvalidData(format!(
                "QMC sample size must be in 1..={MAX_POINTS}, got {size}"
            )));
        }
        if dimension > MAX_DIMENSION {
            return Err(Error::InvalidData(format!(
                "QMC dimension must be at most {MAX_DIMENSION}, got {dimension}"
            )));
        }
        Ok(Self {
            dimension,
            size,
            seed,
        })
    }

    pub fn coordinate(&self, index: usize, dim: usize) -> f64 {
        let u = sobol_burley::sample(index as u32, dim as u32, self.seed) as f64;
        // the generator can return exactly 0
        u.max(f64::from(f32::EPSILON) * 0.5)
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        (0..self.dimension).map(|d| self.coordinate(index, d)).collect()
    }

    /// The first `dims` coordinates of every point.
    pub fn points(&self, dims: usize) -> Vec<Vec<f64>> {
        let dims = dims.min(self.dimension);
        (0..self.size)
            .map(|i| (0..dims).map(|d| self.coordinate(i, d)).collect())
            .collect()
    }
}
