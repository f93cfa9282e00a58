//! Spearman rank correlation and the STS-style pair evaluation harness.
//!
//! Pair files are UTF-8 TSV with three fields per line,
//! `sentence_a<TAB>sentence_b<TAB>gold_score`. Blank lines and lines starting
//! with `#` are skipped.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::embedding::cosine_similarity;
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vocab::Vocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset_name: String,
    pub n_pairs: usize,
    pub spearman: f64,
}

impl EvalReport {
    /// `dataset,n,spearman` with six decimals.
    pub fn csv_row(&self) -> String {
        format!("{},{},{:.6}", self.dataset_name, self.n_pairs, self.spearman)
    }
}

/// Fractional ranks (1-based); tied values share the mean of the ranks they span.
pub fn rank_transform<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("cannot rank an empty vector".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = T::count(start + 1 + end) / T::lit(2.0);
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Pearson correlation of the rank vectors: `cov(rx, ry) / (σ_rx σ_ry)`.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "spearman needs at least 2 observations, got {}",
            x.len()
        )));
    }
    let rx = rank_transform(x)?;
    let ry = rank_transform(y)?;
    pearson(&rx, &ry)
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let n = T::count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::DegenerateInput(
            "constant ranks; correlation undefined".into(),
        ));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

pub fn parse_sts_pairs(text: &str, path: &Path) -> Result<Vec<StsPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let gold: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid gold score {:?}", fields[2])))?;
        if !gold.is_finite() {
            return Err(err(format!("non-finite gold score {gold}")));
        }
        pairs.push(StsPair {
            sentence_a: fields[0].to_string(),
            sentence_b: fields[1].to_string(),
            gold_score: gold,
        });
    }
    Ok(pairs)
}

pub fn load_sts_pairs(path: impl AsRef<Path>) -> Result<Vec<StsPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sts_pairs(&text, path)
}

/// Cosine similarity of inference-mode embeddings for each pair.
pub fn score_pairs<T: Scalar>(
    params: &EncoderParams<T>,
    vocab: &Vocabulary,
    pairs: &[StsPair],
) -> Result<Vec<T>> {
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("no pairs to score".into()));
    }
    let a = encode(params, &vocab.batch(pairs.iter().map(|p| p.sentence_a.as_str()))?, 0, false)?;
    let b = encode(params, &vocab.batch(pairs.iter().map(|p| p.sentence_b.as_str()))?, 0, false)?;
    (0..pairs.len())
        .map(|i| cosine_similarity(a.row(i), b.row(i)))
        .collect()
}

pub fn evaluate_pairs<T: Scalar>(
    params: &EncoderParams<T>,
    vocab: &Vocabulary,
    pairs: &[StsPair],
    dataset_name: &str,
) -> Result<EvalReport> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "{dataset_name}: need at least 2 pairs, found {}",
            pairs.len()
        )));
    }
    let predicted: Vec<f64> = score_pairs(params, vocab, pairs)?
        .into_iter()
        .map(Scalar::as_f64)
        .collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold_score).collect();
    Ok(EvalReport {
        dataset_name: dataset_name.to_string(),
        n_pairs: pairs.len(),
        spearman: spearman(&predicted, &gold)?,
    })
}

/// Loads a pair file and reports its Spearman correlation. The dataset name is
/// the file stem.
pub fn evaluate_sts<T: Scalar>(
    params: &EncoderParams<T>,
    vocab: &Vocabulary,
    dataset_path: impl AsRef<Path>,
) -> Result<EvalReport> {
    let path = dataset_path.as_ref();
    let pairs = load_sts_pairs(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    evaluate_pairs(params, vocab, &pairs, &name)
}

/// Header, one row per report, and an `Avg.` row with the unweighted mean
/// Spearman (its `n` is the total pair count).
pub fn eval_table_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset,n,spearman\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    if !reports.is_empty() {
        let avg = EvalReport {
            dataset_name: "Avg.".into(),
            n_pairs: reports.iter().map(|r| r.n_pairs).sum(),
            spearman: average_spearman(reports),
        };
        out.push_str(&avg.csv_row());
        out.push('\n');
    }
    out
}

pub fn average_spearman(reports: &[EvalReport]) -> f64 {
    reports.iter().map(|r| r.spearman).sum::<f64>() / reports.len() as f64
}
