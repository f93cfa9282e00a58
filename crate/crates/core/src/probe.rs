//! Top-k negative-pair similarity as a function of batch size.
//!
//! For a batch of `N` embeddings: build the `N × N` cosine matrix, drop the
//! diagonal, take each column's `k` largest entries in descending order, and
//! average across columns per rank. Repeating over independent batches and
//! averaging gives one curve per rank across batch sizes.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::embedding::{similarity_matrix, EmbeddingMatrix, MIN_NORM};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::rng::{split_seed, stream, PortableRng};
use crate::scalar::Scalar;
use crate::svg::{LineChart, Series};
use crate::vocab::Vocabulary;

/// Per-rank mean of the `top_k` largest off-diagonal similarities per column.
pub fn probe_batch<T: Scalar>(embeddings: &EmbeddingMatrix<T>, top_k: usize) -> Result<Vec<T>> {
    let n = embeddings.rows();
    if top_k == 0 || n <= top_k {
        return Err(Error::BatchTooSmall { rows: n, top_k });
    }
    let sims = similarity_matrix(embeddings, embeddings)?;
    let mut sums = vec![T::zero(); top_k];
    let mut column = Vec::with_capacity(n - 1);
    for j in 0..n {
        column.clear();
        column.extend(sims.column(j).enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v));
        let desc = |a: &T, b: &T| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal);
        if top_k < column.len() {
            column.select_nth_unstable_by(top_k - 1, desc);
        }
        let top = &mut column[..top_k];
        top.sort_unstable_by(desc);
        for (s, &v) in sums.iter_mut().zip(top.iter()) {
            *s = *s + v;
        }
    }
    let count = T::count(n);
    Ok(sums.into_iter().map(|s| s / count).collect())
}

/// Stateless batch source: the same `(n, seed)` always yields the same batch.
pub trait EmbeddingSource: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, n: usize, seed: u64) -> Result<EmbeddingMatrix<f64>>;
}

/// Unit vectors scattered around fixed Gaussian cluster centres.
#[derive(Clone, Debug)]
pub struct SyntheticClusteredSource {
    centers: EmbeddingMatrix<f64>,
    spread: f64,
}

/// Centres are i.i.d. standard normal (fixed by `seed`); each draw picks a
/// centre uniformly and returns `normalize(center + spread·z)`.
pub fn synthetic_embedding_source(
    cluster_count: usize,
    spread: f64,
    dim: usize,
    seed: u64,
) -> Result<SyntheticClusteredSource> {
    if cluster_count == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "cluster_count and dim must be >= 1".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidConfig(format!("spread must be >= 0, got {spread}")));
    }
    let mut rng = PortableRng::new(seed);
    let mut data = Vec::with_capacity(cluster_count * dim);
    for _ in 0..cluster_count {
        loop {
            let c: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            if crate::embedding::l2_norm(&c) >= MIN_NORM {
                data.extend(c);
                break;
            }
        }
    }
    Ok(SyntheticClusteredSource {
        centers: EmbeddingMatrix::new(cluster_count, dim, data)?,
        spread,
    })
}

impl SyntheticClusteredSource {
    pub fn cluster_count(&self) -> usize {
        self.centers.rows()
    }

    /// Like [`EmbeddingSource::draw`] but also returns each row's cluster.
    pub fn draw_labeled(&self, n: usize, seed: u64) -> (EmbeddingMatrix<f64>, Vec<usize>) {
        let dim = self.centers.dim();
        let mut rng = PortableRng::new(seed);
        let mut data = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        let mut v = vec![0.0; dim];
        for _ in 0..n {
            let c = rng.below(self.centers.rows());
            let center = self.centers.row(c);
            let norm = loop {
                for (x, &m) in v.iter_mut().zip(center) {
                    *x = m + self.spread * rng.standard_normal();
                }
                let norm = crate::embedding::l2_norm(&v);
                if norm >= MIN_NORM {
                    break norm;
                }
            };
            data.extend(v.iter().map(|x| x / norm));
            labels.push(c);
        }
        (EmbeddingMatrix::from_parts_unchecked(n, dim, data), labels)
    }
}

impl EmbeddingSource for SyntheticClusteredSource {
    fn dim(&self) -> usize {
        self.centers.dim()
    }

    fn draw(&self, n: usize, seed: u64) -> Result<EmbeddingMatrix<f64>> {
        Ok(self.draw_labeled(n, seed).0)
    }
}

/// Draws rows with replacement from a fixed pool, e.g. inference embeddings
/// of a corpus under a trained checkpoint.
#[derive(Clone, Debug)]
pub struct PoolSource {
    pool: EmbeddingMatrix<f64>,
}

impl PoolSource {
    pub fn new(pool: EmbeddingMatrix<f64>) -> Self {
        Self { pool }
    }

    pub fn from_checkpoint(
        params: &EncoderParams<f64>,
        vocab: &Vocabulary,
        sentences: &[String],
    ) -> Result<Self> {
        let batch = vocab.batch(sentences.iter().map(String::as_str))?;
        Ok(Self::new(encode(params, &batch, 0, false)?))
    }

    pub fn len(&self) -> usize {
        self.pool.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.rows() == 0
    }
}

impl EmbeddingSource for PoolSource {
    fn dim(&self) -> usize {
        self.pool.dim()
    }

    fn draw(&self, n: usize, seed: u64) -> Result<EmbeddingMatrix<f64>> {
        if self.pool.rows() < n {
            return Err(Error::SourceExhausted {
                needed: n,
                available: self.pool.rows(),
            });
        }
        let mut rng = PortableRng::new(seed);
        let idx: Vec<usize> = (0..n).map(|_| rng.below(self.pool.rows())).collect();
        Ok(self.pool.select_rows(&idx))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub batch_sizes: Vec<usize>,
    pub repeats: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            batch_sizes: default_batch_sizes(),
            repeats: 100,
            top_k: 4,
            seed: 0,
        }
    }
}

/// `8, 16, …, 512`.
pub fn default_batch_sizes() -> Vec<usize> {
    (3..=9).map(|p| 1usize << p).collect()
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let min = self
            .batch_sizes
            .iter()
            .copied()
            .min()
            .ok_or_else(|| Error::InvalidConfig("batch_sizes is empty".into()))?;
        if self.top_k == 0 || self.top_k >= min {
            return Err(Error::InvalidConfig(format!(
                "top_k ({}) must be >= 1 and < the smallest batch size ({min})",
                self.top_k
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of the `repeat`-th batch drawn at `batch_size`.
    pub fn draw_seed(&self, batch_size: usize, repeat: usize) -> u64 {
        split_seed(
            split_seed(self.seed, stream::PROBE, batch_size as u64),
            stream::PROBE,
            repeat as u64,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub batch_size: usize,
    /// Rank 1 first.
    pub means: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub top_k: usize,
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    /// `batch_size,rank,mean_similarity`, one row per (size, rank).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch_size,rank,mean_similarity\n");
        for row in &self.rows {
            for (rank, v) in row.means.iter().enumerate() {
                let _ = writeln!(out, "{},{},{:.6}", row.batch_size, rank + 1, v);
            }
        }
        out
    }

    /// One line per rank over the batch sizes.
    pub fn to_svg(&self) -> String {
        let chart = LineChart {
            title: format!("Top-{} negative-pair cosine similarity", self.top_k),
            x_label: "batch size".into(),
            y_label: "mean cosine similarity".into(),
            x_ticks: self.rows.iter().map(|r| r.batch_size.to_string()).collect(),
            series: (0..self.top_k)
                .map(|k| Series {
                    label: format!("top-{}", k + 1),
                    values: self.rows.iter().map(|r| r.means[k]).collect(),
                })
                .collect(),
        };
        chart.render()
    }
}

/// Averages [`probe_batch`] over `repeats` independent draws per batch size.
/// Repeats run in parallel; seeds are pre-derived and the reduction order is
/// fixed, so the report does not depend on scheduling.
pub fn probe_sweep(cfg: &ProbeConfig, source: &dyn EmbeddingSource) -> Result<ProbeReport> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.batch_sizes.len());
    for &n in &cfg.batch_sizes {
        let per_repeat: Vec<Vec<f64>> = (0..cfg.repeats)
            .into_par_iter()
            .map(|r| probe_batch(&source.draw(n, cfg.draw_seed(n, r))?, cfg.top_k))
            .collect::<Result<_>>()?;
        let mut means = vec![0.0; cfg.top_k];
        for values in &per_repeat {
            for (m, v) in means.iter_mut().zip(values) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= cfg.repeats as f64);
        rows.push(ProbeRow { batch_size: n, means });
    }
    Ok(ProbeReport {
        top_k: cfg.top_k,
        rows,
    })
}
