//! Seeded Gaussian noise matrices used as extra negatives.
//!
//! Entries are `mean + std_dev * z` with `z` drawn by [`PortableRng`]
//! (ChaCha20 + Box-Muller), so a config always reproduces the same matrix.

use crate::embedding::{l2_norm, EmbeddingMatrix, MIN_NORM};
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::scalar::Scalar;

/// Upper bound on zero-norm row rejections before giving up.
const MAX_REJECTIONS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub mean: f64,
    pub std_dev: f64,
    /// Number of noise vectors `M`; zero disables smoothing.
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
}

impl NoiseConfig {
    /// `N(0, 1)` noise.
    pub fn standard(count: usize, dim: usize, seed: u64) -> Self {
        Self {
            mean: 0.0,
            std_dev: 1.0,
            count,
            dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.std_dev.is_finite() || self.std_dev < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise std_dev must be finite and >= 0, got {}",
                self.std_dev
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise mean must be finite, got {}",
                self.mean
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("noise dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Samples a `count × dim` matrix of i.i.d. `N(mean, std_dev²)` draws.
///
/// A row whose norm falls below `1e-12` is redrawn from the next ChaCha
/// stream of the same seed. With `std_dev == 0` every row equals the mean, so
/// a (near) zero mean is reported as `InvalidConfig` instead.
pub fn sample_noise<T: Scalar>(cfg: &NoiseConfig) -> Result<EmbeddingMatrix<T>> {
    cfg.validate()?;
    let mut rng = PortableRng::new(cfg.seed);
    let mut rejections = 0u64;
    let mut data = Vec::with_capacity(cfg.count * cfg.dim);
    let mut row = vec![T::zero(); cfg.dim];
    for _ in 0..cfg.count {
        loop {
            for v in row.iter_mut() {
                *v = T::lit(cfg.mean + cfg.std_dev * rng.standard_normal());
            }
            if l2_norm(&row) >= T::lit(MIN_NORM) {
                break;
            }
            if cfg.std_dev == 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "noise with std_dev 0 and mean {} has zero-norm rows",
                    cfg.mean
                )));
            }
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::InvalidConfig(
                    "noise distribution keeps producing zero-norm rows".into(),
                ));
            }
            rng = PortableRng::with_stream(cfg.seed, rejections);
        }
        data.extend_from_slice(&row);
    }
    Ok(EmbeddingMatrix::from_parts_unchecked(cfg.count, cfg.dim, data))
}

/// Mean and minimum Euclidean row norm.
pub fn noise_norm_stats<T: Scalar>(mat: &EmbeddingMatrix<T>) -> Result<(T, T)> {
    if mat.rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let norms = mat.row_norms();
    let mean = norms.iter().copied().sum::<T>() / T::count(norms.len());
    let min = norms.iter().copied().fold(T::infinity(), T::min);
    Ok((mean, min))
}
