//! InfoNCE and Gaussian-smoothed InfoNCE with exact gradients.
//!
//! For anchors `h_i` (view 1), positives `h_i⁺` (view 2) and noise rows `g_k`:
//!
//! ```text
//! ℓ_i = −log  exp(s(h_i, h_i⁺)/τ) / [ Σ_j exp(s(h_j⁺, h_i)/τ) + λ Σ_k exp(s(g_k, h_i)/τ) ]
//! ```
//!
//! with `s` the cosine similarity. Negatives `j` come from the second view
//! (the `j = i` term is the positive). Temperature always divides. The
//! in-batch and noise log-sum-exps are each max-stabilised and combined via
//! a softplus, so the smoothing increment is never lost to rounding against
//! the `1/τ`-sized logits. Gradients are taken of the batch mean. Noise rows are constants: they never appear
//! in a numerator and receive no gradient.

use crate::embedding::{checked_row_norms, dot, similarity_with_norms, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::scalar::Scalar;

pub const DEFAULT_TEMPERATURE: f64 = 0.05;
pub const DEFAULT_LAMBDA: f64 = 1.0;
/// Noise vectors per batch element: `M = 3 × batch_size`.
pub const DEFAULT_NOISE_MULTIPLIER: f64 = 3.0;

/// Loss hyperparameters: `τ`, `λ`, and the noise distribution (which carries `M`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsLossConfig {
    pub temperature: f64,
    pub lambda: f64,
    pub noise: NoiseConfig,
}

impl GsLossConfig {
    /// Defaults for a batch: `τ = 0.05`, `λ = 1`, `M = 3 × batch_size`, `N(0, 1)` noise.
    pub fn for_batch(batch_size: usize, dim: usize) -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            lambda: DEFAULT_LAMBDA,
            noise: NoiseConfig::standard(noise_count(DEFAULT_NOISE_MULTIPLIER, batch_size), dim, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_temperature(self.temperature)?;
        validate_lambda(self.lambda)?;
        self.noise.validate()
    }
}

/// `M = round(multiplier × batch_size)`.
pub fn noise_count(multiplier: f64, batch_size: usize) -> usize {
    (multiplier * batch_size as f64).round().max(0.0) as usize
}

fn validate_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

fn validate_lambda(l: f64) -> Result<()> {
    if l >= 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {l}")))
    }
}

/// Per-example losses, their mean, and gradients of the mean w.r.t. both views.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult<T> {
    pub per_example: Vec<T>,
    pub mean_loss: T,
    pub grad_view1: EmbeddingMatrix<T>,
    pub grad_view2: EmbeddingMatrix<T>,
}

/// Plain InfoNCE over in-batch negatives.
pub fn info_nce<T: Scalar>(
    view1: &EmbeddingMatrix<T>,
    view2: &EmbeddingMatrix<T>,
    temperature: T,
) -> Result<LossResult<T>> {
    contrastive(view1, view2, None, temperature)
}

/// InfoNCE whose denominator also carries `λ · Σ_k exp(s(g_k, h_i)/τ)`.
///
/// With `λ = 0` or an empty noise matrix this is exactly [`info_nce`].
pub fn gs_info_nce<T: Scalar>(
    view1: &EmbeddingMatrix<T>,
    view2: &EmbeddingMatrix<T>,
    noise: &EmbeddingMatrix<T>,
    temperature: T,
    lambda: T,
) -> Result<LossResult<T>> {
    validate_lambda(lambda.as_f64())?;
    if noise.dim() != view1.dim() {
        return Err(Error::DimensionMismatch {
            expected: view1.dim(),
            found: noise.dim(),
        });
    }
    contrastive(view1, view2, Some((noise, lambda)), temperature)
}

/// Computes `(1/‖h‖)(G − (G·u)u)` in place, the backward pass of `u = h/‖h‖`.
fn project_out_normal<T: Scalar>(g: &mut [T], u: &[T], norm: T) {
    let gu = dot(g, u);
    for (gi, &ui) in g.iter_mut().zip(u) {
        *gi = (*gi - gu * ui) / norm;
    }
}

fn normalized_rows<T: Scalar>(m: &EmbeddingMatrix<T>, norms: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(m.rows() * m.dim());
    for (r, &n) in m.iter_rows().zip(norms) {
        out.extend(r.iter().map(|&v| v / n));
    }
    out
}

fn log_sum_exp<T: Scalar>(sims: &[T], inv_tau: T) -> T {
    let max = sims.iter().fold(T::neg_infinity(), |acc, &s| acc.max(s * inv_tau));
    max + sims.iter().map(|&s| (s * inv_tau - max).exp()).sum::<T>().ln()
}

/// `ln(1 + eˣ)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn contrastive<T: Scalar>(
    view1: &EmbeddingMatrix<T>,
    view2: &EmbeddingMatrix<T>,
    noise: Option<(&EmbeddingMatrix<T>, T)>,
    temperature: T,
) -> Result<LossResult<T>> {
    validate_temperature(temperature.as_f64())?;
    if view1.rows() != view2.rows() {
        return Err(Error::DimensionMismatch {
            expected: view1.rows(),
            found: view2.rows(),
        });
    }
    if view1.dim() != view2.dim() {
        return Err(Error::DimensionMismatch {
            expected: view1.dim(),
            found: view2.dim(),
        });
    }
    let n = view1.rows();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let d = view1.dim();
    // λ = 0 or M = 0 drops the smoothing term entirely.
    let noise = noise.filter(|(g, lambda)| g.rows() > 0 && *lambda > T::zero());

    let norms1 = checked_row_norms(view1)?;
    let norms2 = checked_row_norms(view2)?;
    let sims = similarity_with_norms(view1, view2, &norms1, &norms2);
    let (noise_sims, noise_norms) = match noise {
        Some((g, _)) => {
            let ng = checked_row_norms(g)?;
            (Some(similarity_with_norms(view1, g, &norms1, &ng)), ng)
        }
        None => (None, Vec::new()),
    };
    let m = noise.map_or(0, |(g, _)| g.rows());
    let lambda = noise.map_or(T::zero(), |(_, l)| l);

    let inv_tau = T::one() / temperature;
    let scale = inv_tau / T::count(n);

    let mut per_example = Vec::with_capacity(n);
    // coef[i][j] = (p_ij − δ_ij)/(τN), noise_coef[i][k] = q_ik/(τN)
    let mut coef = vec![T::zero(); n * n];
    let mut noise_coef = vec![T::zero(); n * m];

    for i in 0..n {
        let row = sims.row(i);
        let noise_row = noise_sims.as_ref().map(|s| s.row(i)).unwrap_or(&[]);
        // ℓ = lse_batch − s_ii/τ + softplus(lse_noise + ln λ − lse_batch).
        // The first two terms are exactly InfoNCE; adding the smoothing
        // increment last keeps it visible even when it is tiny.
        let lse_batch = log_sum_exp(row, inv_tau);
        let smoothing = if noise_row.is_empty() {
            T::zero()
        } else {
            softplus(log_sum_exp(noise_row, inv_tau) + lambda.ln() - lse_batch)
        };
        let lse = lse_batch + smoothing;
        per_example.push((lse_batch - row[i] * inv_tau) + smoothing);

        for j in 0..n {
            let p = (row[j] * inv_tau - lse).exp();
            let delta = if i == j { T::one() } else { T::zero() };
            coef[i * n + j] = (p - delta) * scale;
        }
        for k in 0..m {
            let q = lambda * (noise_row[k] * inv_tau - lse).exp();
            noise_coef[i * m + k] = q * scale;
        }
    }

    let u = normalized_rows(view1, &norms1);
    let v = normalized_rows(view2, &norms2);
    let w = noise.map(|(g, _)| normalized_rows(g, &noise_norms)).unwrap_or_default();

    let mut g1 = vec![T::zero(); n * d];
    let mut g2 = vec![T::zero(); n * d];
    for i in 0..n {
        let gi = &mut g1[i * d..(i + 1) * d];
        for j in 0..n {
            let c = coef[i * n + j];
            for (acc, &vj) in gi.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                *acc = *acc + c * vj;
            }
        }
        for k in 0..m {
            let c = noise_coef[i * m + k];
            for (acc, &wk) in gi.iter_mut().zip(&w[k * d..(k + 1) * d]) {
                *acc = *acc + c * wk;
            }
        }
        project_out_normal(gi, &u[i * d..(i + 1) * d], norms1[i]);
    }
    for j in 0..n {
        let gj = &mut g2[j * d..(j + 1) * d];
        for i in 0..n {
            let c = coef[i * n + j];
            for (acc, &ui) in gj.iter_mut().zip(&u[i * d..(i + 1) * d]) {
                *acc = *acc + c * ui;
            }
        }
        project_out_normal(gj, &v[j * d..(j + 1) * d], norms2[j]);
    }

    let mean_loss = per_example.iter().copied().sum::<T>() / T::count(n);
    Ok(LossResult {
        per_example,
        mean_loss,
        grad_view1: EmbeddingMatrix::from_parts_unchecked(n, d, g1),
        grad_view2: EmbeddingMatrix::from_parts_unchecked(n, d, g2),
    })
}
