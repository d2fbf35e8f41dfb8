//! Compressed sparse row matrices with transpose access.
//!
//! Both the symmetric FEM operator and the nonsymmetric FVE operator are
//! stored in this format. The transpose structure is kept alongside the
//! primal one so that transpose products and column gathers cost the same
//! as row operations.

use nalgebra::DMatrix;
use thiserror::Error;

/// Declared symmetry of an assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Entrywise symmetry is checked at construction (tolerance 1e-12).
    AssertedSymmetric,
    General,
}

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("triplet ({row}, {col}) outside {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("matrix asserted symmetric but max |M - M^T| = {defect:e}")]
    NotSymmetric { defect: f64 },
}

/// Real sparse matrix in CSR form, with the CSR form of its transpose.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    // CSR of the transpose; row i here is column i of the matrix.
    t_row_ptr: Vec<usize>,
    t_col_idx: Vec<usize>,
    t_values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseOperator {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        symmetry: Symmetry,
    ) -> Result<Self, SparseError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let (row_ptr, col_idx, values) = compress(nrows, ncols, triplets, false);
        let (t_row_ptr, t_col_idx, t_values) = compress(ncols, nrows, triplets, true);
        let op = Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            t_row_ptr,
            t_col_idx,
            t_values,
            symmetry,
        };
        if symmetry == Symmetry::AssertedSymmetric {
            let defect = op.max_asymmetry();
            if defect >= 1e-12 {
                return Err(SparseError::NotSymmetric { defect });
            }
        }
        Ok(op)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Dimension of a square operator.
    pub fn dim(&self) -> usize {
        assert_eq!(self.nrows, self.ncols, "operator is not square");
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Entries of column `j`, sorted by row.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.t_row_ptr[j]..self.t_row_ptr[j + 1];
        self.t_col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.t_values[span].iter().copied())
    }

    /// Entry (i, j); zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// y = M x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// y = M^T x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for k in self.t_row_ptr[j]..self.t_row_ptr[j + 1] {
                acc += self.t_values[k] * x[self.t_col_idx[k]];
            }
            y[j] = acc;
        }
        y
    }

    /// y = M x for a sparse x, accumulated into a dense workspace.
    ///
    /// `touched` collects the rows that received a contribution so the
    /// caller can reset only those. The workspace must be zeroed on entry.
    pub fn matvec_sparse(
        &self,
        x: &super::SparseVector,
        workspace: &mut [f64],
        touched: &mut Vec<usize>,
    ) {
        for (j, v) in x.iter() {
            for k in self.t_row_ptr[j]..self.t_row_ptr[j + 1] {
                let i = self.t_col_idx[k];
                if workspace[i] == 0.0 {
                    touched.push(i);
                }
                workspace[i] += self.t_values[k] * v;
            }
        }
    }

    /// Largest |M[i,j] - M[j,i]| over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut defect = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                defect = defect.max((v - self.get_transposed(i, j)).abs());
            }
        }
        defect
    }

    fn get_transposed(&self, i: usize, j: usize) -> f64 {
        // M[j, i] looked up through the transpose structure (row i of M^T).
        let span = self.t_row_ptr[i]..self.t_row_ptr[i + 1];
        match self.t_col_idx[span.clone()].binary_search(&j) {
            Ok(pos) => self.t_values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Row sums M . (1, ..., 1)^T.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

fn compress(
    nrows: usize,
    _ncols: usize,
    triplets: &[(usize, usize, f64)],
    transpose: bool,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut entries: Vec<(usize, usize, f64)> = triplets
        .iter()
        .map(|&(r, c, v)| if transpose { (c, r, v) } else { (r, c, v) })
        .collect();
    entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::with_capacity(entries.len());
    let mut values: Vec<f64> = Vec::with_capacity(entries.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in entries {
        if last == Some((r, c)) {
            *values.last_mut().unwrap() += v;
        } else {
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    (row_ptr, col_idx, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseVector;

    fn sample() -> SparseOperator {
        // [2 1 0]
        // [0 3 4]
        // [5 0 6]
        SparseOperator::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, 1.0),
                (1, 1, 3.0),
                (1, 2, 4.0),
                (2, 0, 5.0),
                (2, 2, 6.0),
            ],
            Symmetry::General,
        )
        .unwrap()
    }

    #[test]
    fn matvec_and_transpose() {
        let m = sample();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(m.matvec(&x), vec![4.0, 18.0, 23.0]);
        assert_eq!(m.matvec_transpose(&x), vec![17.0, 7.0, 26.0]);
        assert_eq!(m.get(2, 0), 5.0);
        assert_eq!(m.get(0, 2), 0.0);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = SparseOperator::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, 1.0)],
            Symmetry::AssertedSymmetric,
        )
        .unwrap();
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn symmetry_assertion_rejects_asymmetric() {
        let err = SparseOperator::from_triplets(
            2,
            2,
            &[(0, 1, 1.0), (1, 0, 1.1)],
            Symmetry::AssertedSymmetric,
        );
        assert!(matches!(err, Err(SparseError::NotSymmetric { .. })));
    }

    #[test]
    fn sparse_matvec_matches_dense() {
        let m = sample();
        let x = SparseVector::from_pairs(vec![(2, 3.0), (0, 1.0)]);
        let mut ws = vec![0.0; 3];
        let mut touched = Vec::new();
        m.matvec_sparse(&x, &mut ws, &mut touched);
        let dense = m.matvec(&[1.0, 0.0, 3.0]);
        for i in 0..3 {
            assert!((ws[i] - dense[i]).abs() < 1e-15);
        }
        touched.sort_unstable();
        assert_eq!(touched, vec![0, 1, 2]);
    }

    #[test]
    fn row_sums_and_bandwidth() {
        let m = sample();
        assert_eq!(m.row_sums(), vec![3.0, 7.0, 11.0]);
        assert_eq!(m.bandwidth(), 2);
    }
}
