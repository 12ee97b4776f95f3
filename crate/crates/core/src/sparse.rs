//! Compressed sparse row storage for the assembled finite-element operators.

use crate::error::{Error, Result};
use crate::par;

/// A linear map `x ↦ y` of fixed dimension. Matrix-free operators (the
/// Tikhonov normal equations) may fail internally, hence the `Result`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

/// Square sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Creates a zero matrix with the given sparsity pattern. Column indices
    /// of each row must be sorted and unique.
    pub fn from_pattern(rows: &[Vec<usize>], symmetric: bool) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self { dim, row_ptr, col_idx, values: vec![0.0; nnz], symmetric }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for &(i, j, _) in triplets {
            if i >= dim || j >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: i.max(j) + 1 });
            }
            rows[i].push(j);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let mut m = Self::from_pattern(&rows, symmetric);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            dim: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// Panics if the entry is outside the sparsity pattern; assembly always
    /// builds the pattern from the same connectivity it scatters into.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut s = 0.0;
        for p in lo..hi {
            s += self.values[p] * x[self.col_idx[p]];
        }
        s
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "matvec: input length");
        assert_eq!(y.len(), self.dim, "matvec: output length");
        par::fill_indexed(y, |i| self.row_dot(i, x));
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Sum of all stored entries, `1ᵀ A 1`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `a·self + b·other`; both operands must share the sparsity pattern.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(Error::DimensionMismatch { expected: self.nnz(), found: other.nnz() });
        }
        Ok(Self {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            symmetric: self.symmetric && other.symmetric,
        })
    }

    /// Structural and numerical symmetry check, entrywise relative to the
    /// largest magnitude.
    pub fn check_symmetry(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.dim).all(|i| {
            self.row(i).all(|(j, v)| match self.position(j, i) {
                Some(p) => (self.values[p] - v).abs() <= rel_tol * scale,
                None => v == 0.0,
            })
        })
    }

    /// Row-major dense copy, for small oracles and debugging.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.matvec_into(x, y);
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0), (2, 2, 1.0)],
            true,
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = sample();
        assert_eq!(m.get(2, 2), 3.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.nnz(), 7);
    }

    #[test]
    fn matvec_and_row_sums() {
        let m = sample();
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 2.0]);
        assert_eq!(m.row_sums(), vec![1.0, 0.0, 2.0]);
        assert_eq!(m.total(), 3.0);
    }

    #[test]
    fn linear_combination_requires_same_pattern() {
        let m = sample();
        let c = m.linear_combination(2.0, &m, -1.0).unwrap();
        assert_eq!(c, m);
        assert!(m.linear_combination(1.0, &SparseOperator::identity(3), 1.0).is_err());
    }

    #[test]
    fn symmetry_detects_asymmetry() {
        let m = sample();
        assert!(m.check_symmetry(1e-15));
        let n = SparseOperator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.5)], false).unwrap();
        assert!(!n.check_symmetry(1e-3));
    }

    #[test]
    fn out_of_range_triplet_is_an_error() {
        assert!(SparseOperator::from_triplets(2, &[(2, 0, 1.0)], false).is_err());
    }
}
