//! Toy sentence encoder: mean-pooled token embeddings, one affine layer,
//! `tanh`, then inverted dropout in training mode.
//!
//! Feeding the same batch twice with different dropout seeds gives two views
//! whose rows differ only by their dropout masks; those rows are the positive
//! pairs for the contrastive loss.

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::scalar::Scalar;

pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub vocab_size: usize,
    pub dim: usize,
    /// `vocab_size × dim`, row-major.
    pub token_embeddings: Vec<T>,
    /// `dim × dim`, row-major; output coordinate `r` is `Σ_c W[r, c]·x_c + b_r`.
    pub hidden_weight: Vec<T>,
    pub hidden_bias: Vec<T>,
    pub dropout_p: T,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "encoder vocab_size and dim must be >= 1".into(),
            ));
        }
        let d = self.dim;
        let shapes = [
            (self.token_embeddings.len(), self.vocab_size * d),
            (self.hidden_weight.len(), d * d),
            (self.hidden_bias.len(), d),
        ];
        for (found, expected) in shapes {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        if let Some(index) = self.parameters().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let p = self.dropout_p;
        if !(p >= T::zero() && p < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "dropout_p must be in [0, 1), got {p}"
            )));
        }
        Ok(())
    }

    /// All trainable entries in checkpoint order.
    pub fn parameters(&self) -> impl Iterator<Item = T> + '_ {
        self.token_embeddings
            .iter()
            .chain(&self.hidden_weight)
            .chain(&self.hidden_bias)
            .copied()
    }

    pub fn parameter_count(&self) -> usize {
        self.token_embeddings.len() + self.hidden_weight.len() + self.hidden_bias.len()
    }

    /// Mutable access to the `i`-th trainable entry in checkpoint order.
    pub fn parameter_mut(&mut self, mut i: usize) -> &mut T {
        if i < self.token_embeddings.len() {
            return &mut self.token_embeddings[i];
        }
        i -= self.token_embeddings.len();
        if i < self.hidden_weight.len() {
            return &mut self.hidden_weight[i];
        }
        i -= self.hidden_weight.len();
        &mut self.hidden_bias[i]
    }

    pub fn with_dropout(mut self, p: T) -> Self {
        self.dropout_p = p;
        self
    }

    fn token_row(&self, id: u32) -> &[T] {
        let i = id as usize;
        &self.token_embeddings[i * self.dim..(i + 1) * self.dim]
    }
}

/// Token-id sequences, one per sentence. Every sequence is non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    sequences: Vec<Vec<u32>>,
}

impl TokenBatch {
    pub fn new(sequences: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(index) = sequences.iter().position(Vec::is_empty) {
            return Err(Error::EmptySequence { index });
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    fn check_range(&self, vocab_size: usize) -> Result<()> {
        for seq in &self.sequences {
            if let Some(&token) = seq.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::TokenOutOfRange { token, vocab_size });
            }
        }
        Ok(())
    }
}

/// `vocab_size × dim` embeddings and `dim × dim` weights drawn uniformly from
/// `[-0.1, 0.1)` (embeddings first), zero bias, dropout 0.1.
pub fn init_params(vocab_size: usize, dim: usize, init_seed: u64) -> Result<EncoderParams<f64>> {
    if vocab_size == 0 || dim == 0 {
        return Err(Error::InvalidConfig(format!(
            "vocab_size and dim must be >= 1 (got {vocab_size}, {dim})"
        )));
    }
    let mut rng = PortableRng::new(init_seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE)).collect()
    };
    let token_embeddings = draw(vocab_size * dim);
    let hidden_weight = draw(dim * dim);
    Ok(EncoderParams {
        vocab_size,
        dim,
        token_embeddings,
        hidden_weight,
        hidden_bias: vec![0.0; dim],
        dropout_p: DEFAULT_DROPOUT,
    })
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// Mean-pooled token embeddings, `N × d`.
    pub pooled: Vec<T>,
    /// `tanh` activations before dropout, `N × d`.
    pub activations: Vec<T>,
    /// Per-entry dropout multiplier (`0` or `1/(1−p)`); `None` at inference.
    pub mask: Option<Vec<T>>,
}

/// Inverted-dropout multipliers for `n` entries. Entry `e` is kept when the
/// `e`-th uniform draw of `PortableRng::new(seed)` is below `1 − p`.
pub fn dropout_mask<T: Scalar>(n: usize, p: T, seed: u64) -> Vec<T> {
    let keep = 1.0 - p.as_f64();
    let scale = T::one() / (T::one() - p);
    let mut rng = PortableRng::new(seed);
    (0..n)
        .map(|_| if rng.next_f64() < keep { scale } else { T::zero() })
        .collect()
}

pub fn encode<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &TokenBatch,
    dropout_seed: u64,
    train_mode: bool,
) -> Result<EmbeddingMatrix<T>> {
    encode_with_trace(params, batch, dropout_seed, train_mode).map(|(m, _)| m)
}

pub fn encode_with_trace<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &TokenBatch,
    dropout_seed: u64,
    train_mode: bool,
) -> Result<(EmbeddingMatrix<T>, ForwardTrace<T>)> {
    batch.check_range(params.vocab_size)?;
    let d = params.dim;
    let n = batch.len();
    let mut pooled = vec![T::zero(); n * d];
    let mut activations = vec![T::zero(); n * d];
    for (i, seq) in batch.sequences().iter().enumerate() {
        let e = &mut pooled[i * d..(i + 1) * d];
        for &tok in seq {
            for (acc, &v) in e.iter_mut().zip(params.token_row(tok)) {
                *acc = *acc + v;
            }
        }
        let len = T::count(seq.len());
        e.iter_mut().for_each(|v| *v = *v / len);

        let h = &mut activations[i * d..(i + 1) * d];
        for (r, out) in h.iter_mut().enumerate() {
            let w = &params.hidden_weight[r * d..(r + 1) * d];
            let pre = w.iter().zip(e.iter()).fold(params.hidden_bias[r], |acc, (&a, &b)| acc + a * b);
            *out = pre.tanh();
        }
    }
    let mask = train_mode.then(|| dropout_mask(n * d, params.dropout_p, dropout_seed));
    let output = match &mask {
        Some(m) => activations.iter().zip(m).map(|(&h, &k)| h * k).collect(),
        None => activations.clone(),
    };
    let out = EmbeddingMatrix::new(n, d, output)?;
    Ok((
        out,
        ForwardTrace {
            pooled,
            activations,
            mask,
        },
    ))
}

/// Two training-mode passes over the same batch with independent masks.
pub fn encode_pair<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &TokenBatch,
    seed1: u64,
    seed2: u64,
) -> Result<(EmbeddingMatrix<T>, EmbeddingMatrix<T>)> {
    Ok((
        encode(params, batch, seed1, true)?,
        encode(params, batch, seed2, true)?,
    ))
}

/// Gradient buffers with the same layout as [`EncoderParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads<T> {
    pub token_embeddings: Vec<T>,
    pub hidden_weight: Vec<T>,
    pub hidden_bias: Vec<T>,
}

impl<T: Scalar> EncoderGrads<T> {
    pub fn zeros_like(params: &EncoderParams<T>) -> Self {
        Self {
            token_embeddings: vec![T::zero(); params.token_embeddings.len()],
            hidden_weight: vec![T::zero(); params.hidden_weight.len()],
            hidden_bias: vec![T::zero(); params.hidden_bias.len()],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.token_embeddings
            .iter()
            .chain(&self.hidden_weight)
            .chain(&self.hidden_bias)
            .copied()
    }
}

/// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output` for one forward pass.
///
/// Chain: dropout mask → `tanh` → affine → mean pool → embedding lookup.
pub fn backward<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &TokenBatch,
    trace: &ForwardTrace<T>,
    grad_output: &EmbeddingMatrix<T>,
    grads: &mut EncoderGrads<T>,
) -> Result<()> {
    let d = params.dim;
    if grad_output.rows() != batch.len() || grad_output.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: batch.len() * d,
            found: grad_output.rows() * grad_output.dim(),
        });
    }
    let mut grad_pre = vec![T::zero(); d];
    let mut grad_pooled = vec![T::zero(); d];
    for (i, seq) in batch.sequences().iter().enumerate() {
        let gy = grad_output.row(i);
        let h = &trace.activations[i * d..(i + 1) * d];
        let e = &trace.pooled[i * d..(i + 1) * d];
        for r in 0..d {
            let through_mask = match &trace.mask {
                Some(m) => gy[r] * m[i * d + r],
                None => gy[r],
            };
            grad_pre[r] = through_mask * (T::one() - h[r] * h[r]);
        }
        grad_pooled.iter_mut().for_each(|v| *v = T::zero());
        for (r, &g) in grad_pre.iter().enumerate().take(d) {
            grads.hidden_bias[r] = grads.hidden_bias[r] + g;
            let w = &params.hidden_weight[r * d..(r + 1) * d];
            let gw = &mut grads.hidden_weight[r * d..(r + 1) * d];
            for c in 0..d {
                gw[c] = gw[c] + g * e[c];
                grad_pooled[c] = grad_pooled[c] + w[c] * g;
            }
        }
        let len = T::count(seq.len());
        for &tok in seq {
            let t = tok as usize;
            let gt = &mut grads.token_embeddings[t * d..(t + 1) * d];
            for (acc, &g) in gt.iter_mut().zip(&grad_pooled) {
                *acc = *acc + g / len;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::similarity_matrix;

    fn batch(seqs: &[&[u32]]) -> TokenBatch {
        TokenBatch::new(seqs.iter().map(|s| s.to_vec()).collect()).unwrap()
    }

    fn synthetic_batch(n: usize, vocab: usize, seed: u64) -> TokenBatch {
        let mut rng = PortableRng::new(seed);
        let seqs = (0..n)
            .map(|_| {
                let len = 3 + rng.below(6);
                (0..len).map(|_| rng.below(vocab) as u32).collect()
            })
            .collect();
        TokenBatch::new(seqs).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(50, 8, 1).unwrap();
        let b = init_params(50, 8, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(50, 8, 2).unwrap());
        assert!(a.hidden_bias.iter().all(|&v| v == 0.0));
        assert!(a.parameters().all(|v| v.abs() <= 0.1));
        assert_eq!(a.dropout_p, 0.1);
        a.validate().unwrap();
        assert!(matches!(init_params(0, 8, 1), Err(Error::InvalidConfig(_))));
        assert!(matches!(init_params(5, 0, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn inference_is_deterministic() {
        let p = init_params(20, 6, 3).unwrap();
        let b = batch(&[&[1, 2, 3], &[4, 5]]);
        assert_eq!(encode(&p, &b, 1, false).unwrap(), encode(&p, &b, 99, false).unwrap());
    }

    #[test]
    fn zero_dropout_matches_inference() {
        let p = init_params(20, 6, 3).unwrap().with_dropout(0.0);
        let b = batch(&[&[1, 2, 3], &[4, 5]]);
        assert_eq!(encode(&p, &b, 17, true).unwrap(), encode(&p, &b, 0, false).unwrap());
        let (v1, v2) = encode_pair(&p, &b, 1, 2).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn dropout_seed_controls_mask() {
        let p = init_params(20, 6, 3).unwrap();
        let b = batch(&[&[1, 2, 3], &[4, 5], &[6]]);
        assert_eq!(encode(&p, &b, 5, true).unwrap(), encode(&p, &b, 5, true).unwrap());
        assert_ne!(encode(&p, &b, 5, true).unwrap(), encode(&p, &b, 6, true).unwrap());
        let (v1, v2) = encode_pair(&p, &b, 8, 8).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn identical_seeds_give_unit_diagonal() {
        let p = init_params(20, 6, 3).unwrap();
        let b = synthetic_batch(5, 20, 1);
        let (v1, v2) = encode_pair(&p, &b, 4, 4).unwrap();
        let s = similarity_matrix(&v1, &v2).unwrap();
        for i in 0..5 {
            assert!((s.get(i, i) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn positives_closer_than_negatives() {
        let p = init_params(200, 32, 11).unwrap();
        let b = synthetic_batch(32, 200, 12);
        let (v1, v2) = encode_pair(&p, &b, 100, 200).unwrap();
        let s = similarity_matrix(&v1, &v2).unwrap();
        let n = 32;
        let diag = (0..n).map(|i| s.get(i, i)).sum::<f64>() / n as f64;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += s.get(i, j);
                }
            }
        }
        off /= (n * (n - 1)) as f64;
        assert!(diag > off, "diag {diag} off {off}");
    }

    #[test]
    fn inverted_dropout_is_unbiased() {
        let p = init_params(10, 4, 9).unwrap();
        let b = batch(&[&[1, 2, 3]]);
        let clean = encode(&p, &b, 0, false).unwrap();
        let seeds = 10_000;
        let d = 4;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for s in 0..seeds {
            let out = encode(&p, &b, s, true).unwrap();
            for c in 0..d {
                sum[c] += out.get(0, c);
                sum_sq[c] += out.get(0, c).powi(2);
            }
        }
        for c in 0..d {
            let mean = sum[c] / seeds as f64;
            let var = sum_sq[c] / seeds as f64 - mean * mean;
            let se = (var / seeds as f64).sqrt();
            assert!((mean - clean.get(0, c)).abs() <= 3.0 * se, "coord {c}: {mean} vs {}", clean.get(0, c));
        }
    }

    #[test]
    fn outputs_have_nonzero_norm() {
        let p = init_params(100, 16, 2).unwrap();
        let b = synthetic_batch(64, 100, 3);
        let out = encode(&p, &b, 0, false).unwrap();
        assert!(out.row_norms().iter().all(|&n| n >= 1e-12));
    }

    #[test]
    fn input_errors() {
        let p = init_params(5, 4, 0).unwrap();
        assert!(matches!(
            encode(&p, &batch(&[&[1, 5]]), 0, false),
            Err(Error::TokenOutOfRange { token: 5, vocab_size: 5 })
        ));
        assert!(matches!(
            TokenBatch::new(vec![vec![1], vec![]]),
            Err(Error::EmptySequence { index: 1 })
        ));
    }

    #[test]
    fn f32_forward_tracks_f64() {
        let p64 = init_params(20, 6, 3).unwrap();
        let p32 = EncoderParams::<f32> {
            vocab_size: p64.vocab_size,
            dim: p64.dim,
            token_embeddings: p64.token_embeddings.iter().map(|&v| v as f32).collect(),
            hidden_weight: p64.hidden_weight.iter().map(|&v| v as f32).collect(),
            hidden_bias: p64.hidden_bias.iter().map(|&v| v as f32).collect(),
            dropout_p: 0.1,
        };
        let b = batch(&[&[1, 2, 3], &[4, 5]]);
        let a = encode(&p64, &b, 3, true).unwrap();
        let c = encode(&p32, &b, 3, true).unwrap();
        for (x, y) in a.as_slice().iter().zip(c.as_slice()) {
            assert!((x - *y as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_matches_finite_differences_of_linear_probe() {
        // L = Σ c_e · y_e for fixed random c; dL/dθ via backward vs central differences.
        let params = init_params(8, 3, 4).unwrap();
        let b = batch(&[&[1, 2, 2], &[3, 7]]);
        let mut rng = PortableRng::new(77);
        let c: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
        let loss = |p: &EncoderParams<f64>| -> f64 {
            let y = encode(p, &b, 13, true).unwrap();
            y.as_slice().iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let (_, trace) = encode_with_trace(&params, &b, 13, true).unwrap();
        let gout = EmbeddingMatrix::new(2, 3, c.clone()).unwrap();
        let mut grads = EncoderGrads::zeros_like(&params);
        backward(&params, &b, &trace, &gout, &mut grads).unwrap();
        let analytic: Vec<f64> = grads.values().collect();
        let h = 1e-6;
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            *plus.parameter_mut(i) += h;
            let mut minus = params.clone();
            *minus.parameter_mut(i) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - a).abs() < 1e-8, "param {i}: {a} vs {fd}");
        }
    }
}
