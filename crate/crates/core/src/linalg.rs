//! Sparse storage and the linear solver.
//!
//! Assembly pushes `(row, col, value)` triplets into a [`TripletBuffer`];
//! [`TripletBuffer::compress`] turns them into a row-compressed
//! [`CsrMatrix`]. Solves go through faer's sparse LU with partial pivoting,
//! followed by iterative refinement until the relative residual meets
//! [`RESIDUAL_TOLERANCE`].

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::{Error, Result};

/// Relative residual `‖Ax − b‖₂ / ‖b‖₂` every accepted solve must meet.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const MAX_REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Appends another worker's entries.
    pub fn merge(&mut self, other: TripletBuffer) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Sums duplicates into an `n`×`n` CSR matrix.
    ///
    /// Entries are sorted by `(row, col, value)` before summation, so the
    /// result is bitwise independent of insertion order.
    pub fn compress(mut self, n: usize) -> Result<CsrMatrix> {
        if let Some(&(row, col, _)) = self.entries.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::IndexOutOfRange { row, col, dim: n });
        }
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }
}

/// Square row-compressed matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of one row as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, other: &CsrMatrix, scale: f64) -> Result<CsrMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut buf = TripletBuffer::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                buf.push(i, j, a);
            }
            for (j, a) in other.row(i) {
                buf.push(i, j, scale * a);
            }
        }
        buf.compress(self.n)
    }

    /// Block `[rows, cols]` of the matrix as a rectangular CSR.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> RectCsr {
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in rows.clone() {
            for (j, a) in self.row(i) {
                if cols.contains(&j) {
                    col_idx.push(j - cols.start);
                    values.push(a);
                }
            }
            row_ptr.push(col_idx.len());
        }
        RectCsr {
            nrows: rows.len(),
            ncols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        dense
    }
}

/// Rectangular CSR block, produced by [`CsrMatrix::block`].
#[derive(Debug, Clone, PartialEq)]
pub struct RectCsr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl RectCsr {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// Reinterprets a square block as a [`CsrMatrix`].
    pub fn into_square(self) -> Result<CsrMatrix> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: self.ncols,
            });
        }
        Ok(CsrMatrix {
            n: self.nrows,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        })
    }
}

/// Solution of a linear system together with its achieved accuracy.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub relative_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

/// Solves `A x = b`, returning `x`.
pub fn solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    solve_with_residual(a, b).map(|s| s.x)
}

/// Solves `A x = b` by sparse LU and reports the relative residual.
pub fn solve_with_residual(a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 {
        return Ok(LinearSolution {
            x: Vec::new(),
            relative_residual: 0.0,
        });
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            x: vec![0.0; n],
            relative_residual: 0.0,
        });
    }

    let triplets: Vec<Triplet<usize, usize, f64>> = (0..n)
        .flat_map(|i| a.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SingularMatrix(format!("invalid sparsity structure: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::SingularMatrix(format!("factorization failed: {e:?}")))?;

    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let sol = lu.solve(&rhs);
    let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix(
            "zero or vanishing pivot produced a non-finite solution".into(),
        ));
    }

    let mut r = residual(a, &x, b);
    let mut rel = norm2(&r) / b_norm;
    for _ in 0..MAX_REFINEMENT_STEPS {
        if rel <= RESIDUAL_TOLERANCE * 1e-2 {
            break;
        }
        let dx = lu.solve(&Col::<f64>::from_fn(n, |i| r[i]));
        let candidate: Vec<f64> = x.iter().enumerate().map(|(i, xi)| xi + dx[i]).collect();
        let r_new = residual(a, &candidate, b);
        let rel_new = norm2(&r_new) / b_norm;
        if !(rel_new < rel) {
            break;
        }
        x = candidate;
        r = r_new;
        rel = rel_new;
    }
    if !(rel <= RESIDUAL_TOLERANCE) {
        return Err(Error::InaccurateSolve {
            residual: rel,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    Ok(LinearSolution {
        x,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum() {
        let mut buf = TripletBuffer::new();
        buf.push(0, 0, 1.0);
        buf.push(0, 0, 2.0);
        let m = buf.compress(1).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn empty_buffer_is_zero_matrix() {
        let m = TripletBuffer::new().compress(3).unwrap();
        assert_eq!(m, CsrMatrix::zeros(3));
        assert_eq!(m.to_dense(), vec![vec![0.0; 3]; 3]);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut buf = TripletBuffer::new();
        buf.push(0, 3, 1.0);
        assert!(matches!(
            buf.compress(3),
            Err(Error::IndexOutOfRange { row: 0, col: 3, dim: 3 })
        ));
    }

    #[test]
    fn identity_and_diagonal_solves() {
        let b = vec![1.5, -2.0, 7.0];
        assert_eq!(solve(&CsrMatrix::identity(3), &b).unwrap(), b);
        let mut buf = TripletBuffer::new();
        buf.push(0, 0, 2.0);
        buf.push(1, 1, 4.0);
        let x = solve(&buf.compress(2).unwrap(), &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn nonsymmetric_needs_pivoting() {
        // zero leading diagonal entry
        let mut buf = TripletBuffer::new();
        buf.push(0, 1, 1.0);
        buf.push(1, 0, 1.0);
        buf.push(1, 1, 3.0);
        let x = solve(&buf.compress(2).unwrap(), &[2.0, 5.0]).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reported() {
        let mut buf = TripletBuffer::new();
        buf.push(0, 0, 1.0);
        buf.push(0, 1, 1.0);
        buf.push(1, 0, 1.0);
        buf.push(1, 1, 1.0);
        let err = solve(&buf.compress(2).unwrap(), &[1.0, 2.0]).unwrap_err();
        assert!(
            matches!(err, Error::SingularMatrix(_) | Error::InaccurateSolve { .. }),
            "{err}"
        );
        let structurally = TripletBuffer::new().compress(2).unwrap();
        assert!(solve(&structurally, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let x = solve(&CsrMatrix::identity(4), &[0.0; 4]).unwrap();
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn block_extraction() {
        let mut buf = TripletBuffer::new();
        for i in 0..4 {
            for j in 0..4 {
                buf.push(i, j, (10 * i + j) as f64);
            }
        }
        let m = buf.compress(4).unwrap();
        let b = m.block(1..3, 2..4);
        assert_eq!((b.nrows, b.ncols), (2, 2));
        assert_eq!(b.mul_vec(&[1.0, 0.0]), vec![12.0, 22.0]);
        let sq = m.block(0..2, 0..2).into_square().unwrap();
        assert_eq!(sq.get(1, 0), 10.0);
    }
}
