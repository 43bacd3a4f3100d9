//! Row-major `f32` embedding matrices.

use crate::{budget, Error, Result};

/// A `count × dim` matrix of `f32` rows.
///
/// `normalized` records whether every row is known to have unit norm. It is
/// set by [`EmbeddingSet::normalize`], [`EmbeddingSet::matryoshka_slice`] and
/// the samplers, and cleared when loading from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    count: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain(format!("embedding dimension must be >= 2, got {dim}")));
        }
        if data.len() % dim != 0 {
            return Err(Error::Malformed(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        budget::check(count, dim)?;
        Ok(Self { dim, count, data, normalized: false })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::Empty("rows"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { row: i, expected: dim, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub(crate) fn from_unit_rows(dim: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        Self { dim, count: data.len() / dim, data, normalized: true }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Divides every row by its Euclidean norm (accumulated in `f64`).
    pub fn normalize(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, r) in self.rows().enumerate() {
            push_unit(&mut data, r, i)?;
        }
        Ok(Self::from_unit_rows(self.dim, data))
    }

    /// Keeps the first `dim_out` coordinates of every row and re-normalises.
    pub fn matryoshka_slice(&self, dim_out: usize) -> Result<Self> {
        if dim_out < 2 || dim_out > self.dim {
            return Err(Error::domain(format!(
                "slice dimension {dim_out} outside [2, {}]",
                self.dim
            )));
        }
        let mut data = Vec::with_capacity(self.count * dim_out);
        for (i, r) in self.rows().enumerate() {
            push_unit(&mut data, &r[..dim_out], i)?;
        }
        Ok(Self::from_unit_rows(dim_out, data))
    }

    /// Rows at `indices`, in that order; repeats are allowed.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        budget::check(indices.len(), self.dim)?;
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.count {
                return Err(Error::domain(format!("row index {i} out of range for {} rows", self.count)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { dim: self.dim, count: indices.len(), data, normalized: self.normalized })
    }

    /// Appends the rows of `other`; the result is normalised only if both are.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { row: 0, expected: self.dim, found: other.dim });
        }
        budget::check(self.count + other.count, self.dim)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            dim: self.dim,
            count: self.count + other.count,
            data,
            normalized: self.normalized && other.normalized,
        })
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::domain("embedding set must be normalized first"))
        }
    }
}

fn push_unit(out: &mut Vec<f32>, r: &[f32], index: usize) -> Result<()> {
    let n2: f64 = r.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::ZeroRow { index });
    }
    let inv = 1.0 / n2.sqrt();
    out.extend(r.iter().map(|&x| (f64::from(x) * inv) as f32));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rows() {
        let s = EmbeddingSet::from_rows(&[[3.0f32, 4.0], [0.0, 2.0]]).unwrap();
        assert!(!s.is_normalized());
        let n = s.normalize().unwrap();
        assert!(n.is_normalized());
        assert_eq!(n.row(0), &[0.6, 0.8]);
        assert_eq!(n.row(1), &[0.0, 1.0]);
        let again = n.normalize().unwrap();
        for (a, b) in again.data().iter().zip(n.data()) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn zero_row_is_named() {
        let s = EmbeddingSet::from_rows(&[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(s.normalize(), Err(Error::ZeroRow { index: 1 })));
    }

    #[test]
    fn slicing() {
        let s = EmbeddingSet::from_rows(&[[1.0f32, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]).unwrap();
        let t = s.matryoshka_slice(2).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.row(0), &[1.0, 0.0]);
        assert_eq!(t, s.normalize().unwrap().matryoshka_slice(2).unwrap());
        assert_eq!(s.matryoshka_slice(4).unwrap(), s.normalize().unwrap());
        assert!(s.matryoshka_slice(5).is_err());
        assert!(s.matryoshka_slice(1).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows: Vec<Vec<f32>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            EmbeddingSet::from_rows(&rows),
            Err(Error::DimensionMismatch { row: 1, expected: 2, found: 1 })
        ));
        assert!(EmbeddingSet::new(3, vec![0.0; 4]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let s = EmbeddingSet::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]]).unwrap();
        let t = s.select(&[1, 1, 0]).unwrap();
        assert_eq!(t.count(), 3);
        assert_eq!(t.row(0), t.row(1));
        assert_eq!(s.concat(&t).unwrap().count(), 5);
        assert!(s.select(&[2]).is_err());
    }
}
