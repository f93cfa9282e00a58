//! Dense row-major embedding matrices and cosine similarity kernels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Norms below this are treated as degenerate embeddings.
pub const MIN_NORM: f64 = 1e-12;

/// `rows × dim` row-major matrix; one row per sentence or noise vector.
///
/// Every entry is finite. `rows` may be zero, `dim` may not.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Result<Self> {
        Self::new(rows, dim, vec![T::zero(); rows * dim])
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyMatrix)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Builds without the finiteness scan; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(rows: usize, dim: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Returns a copy with entry `(i, j)` replaced. Rejects non-finite values.
    pub fn with_entry(&self, i: usize, j: usize, value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                index: i * self.dim + j,
            });
        }
        let mut out = self.clone();
        out.data[i * self.dim + j] = value;
        Ok(out)
    }

    /// Returns a copy with row `i` multiplied by `alpha`.
    pub fn scale_row(&self, i: usize, alpha: T) -> Result<Self> {
        let mut data = self.data.clone();
        for v in &mut data[i * self.dim..(i + 1) * self.dim] {
            *v = *v * alpha;
        }
        Self::new(self.rows, self.dim, data)
    }

    /// Gathers the given rows (repeats allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::from_parts_unchecked(indices.len(), self.dim, data)
    }

    /// Euclidean norm of every row.
    pub fn row_norms(&self) -> Vec<T> {
        self.iter_rows().map(l2_norm).collect()
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        let data = self.data.iter().map(|&v| U::lit(v.as_f64())).collect();
        EmbeddingMatrix::from_parts_unchecked(self.rows, self.dim, data)
    }
}

/// `rows × cols` cosine similarities, clamped to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn to_nested(&self) -> Vec<Vec<T>> {
        self.values.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn l2_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

/// Shared by `cosine_similarity` and `similarity_matrix` so both produce
/// bit-identical values: `clamp(dot(a, b) / (‖a‖·‖b‖))`.
#[inline]
fn cosine_with_norms<T: Scalar>(a: &[T], b: &[T], norm_a: T, norm_b: T) -> T {
    clamp_unit(dot(a, b) / (norm_a * norm_b))
}

fn checked_norm<T: Scalar>(v: &[T], row: Option<usize>) -> Result<T> {
    let n = l2_norm(v);
    if n < T::lit(MIN_NORM) {
        return Err(Error::ZeroNorm { row });
    }
    Ok(n)
}

/// Cosine similarity `aᵀb / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
///
/// Zero-norm inputs (norm below `1e-12`) are an error rather than a silent 0.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = checked_norm(a, None)?;
    let nb = checked_norm(b, None)?;
    Ok(cosine_with_norms(a, b, na, nb))
}

/// Checks every row norm; returns the norms or the first offending row.
pub(crate) fn checked_row_norms<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<Vec<T>> {
    m.iter_rows()
        .enumerate()
        .map(|(i, r)| checked_norm(r, Some(i)))
        .collect()
}

/// Entry `(i, j)` is `cosine_similarity(a.row(i), b.row(j))`.
pub fn similarity_matrix<T: Scalar>(
    a: &EmbeddingMatrix<T>,
    b: &EmbeddingMatrix<T>,
) -> Result<SimilarityMatrix<T>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let na = checked_row_norms(a)?;
    let nb = checked_row_norms(b)?;
    Ok(similarity_with_norms(a, b, &na, &nb))
}

pub(crate) fn similarity_with_norms<T: Scalar>(
    a: &EmbeddingMatrix<T>,
    b: &EmbeddingMatrix<T>,
    na: &[T],
    nb: &[T],
) -> SimilarityMatrix<T> {
    let mut values = Vec::with_capacity(a.rows() * b.rows());
    for (i, ra) in a.iter_rows().enumerate() {
        for (j, rb) in b.iter_rows().enumerate() {
            values.push(cosine_with_norms(ra, rb, na[i], nb[j]));
        }
    }
    SimilarityMatrix {
        rows: a.rows(),
        cols: b.rows(),
        values,
    }
}
