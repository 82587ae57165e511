//! Thin wrappers over `faer` for the handful of sparse and dense operations
//! the solver needs.

use faer::linalg::solvers::{Solve, SolveCore};
use faer::prelude::Reborrow;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, MatMut, MatRef, Side};

use crate::error::{Error, Result};

/// Symmetric sparse matrix, both triangles stored in compressed columns.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseSymMatrix {
    /// Builds the matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        // merge duplicates in input order, so mirrored entries of a
        // symmetric assembly sum to bitwise equal values
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (j, i));
        let mut entries: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            match entries.last_mut() {
                Some(last) if last.row == i && last.col == j => last.val += v,
                _ => entries.push(Triplet::new(i, j, v)),
            }
        }
        let inner = SparseColMat::try_new_from_triplets(n, n, &entries)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix creation: {e:?}")))?;
        Ok(Self { inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn as_faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    /// Stored entry `(i, j)`, zero if structurally absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = self.inner.row_idx_of_col_raw(j);
        let vals = self.inner.val_of_col(j);
        rows.iter()
            .zip(vals)
            .filter(|(&r, _)| r == i)
            .map(|(_, &v)| v)
            .sum()
    }

    /// Whether `(i, j)` is part of the sparsity pattern.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.inner.row_idx_of_col_raw(j).contains(&i)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; self.dim()];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let rows = self.inner.row_idx_of_col_raw(j);
            let vals = self.inner.val_of_col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        &self.inner * rhs
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.inner.to_dense()
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.dim())
            .flat_map(|j| self.inner.val_of_col(j).iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji| / max |a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            let rows = self.inner.row_idx_of_col_raw(j);
            let vals = self.inner.val_of_col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn cholesky(&self, context: impl Into<String>) -> Result<Cholesky> {
        if self.dim() == 0 {
            return Err(Error::Factorization {
                context: format!("{} (empty system)", context.into()),
            });
        }
        let llt = self
            .inner
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization {
                context: format!("{}: {e:?}", context.into()),
            })?;
        Ok(Cholesky { llt, n: self.dim() })
    }
}

/// Sparse `LL^T` factorization, reused for many right-hand sides.
#[derive(Debug, Clone)]
pub struct Cholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place_with_conj(Conj::No, x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        self.llt.solve_in_place_with_conj(Conj::No, rhs);
    }
}

/// Dense symmetric positive definite inverse via Cholesky.
pub fn spd_inverse(a: MatRef<'_, f64>, context: &str) -> Result<Mat<f64>> {
    let llt = a.llt(Side::Lower).map_err(|e| Error::Factorization {
        context: format!("{context}: {e:?}"),
    })?;
    Ok(llt.solve(Mat::<f64>::identity(a.nrows(), a.ncols())))
}

/// Eigenpairs of a dense symmetric matrix, sorted by descending eigenvalue.
pub fn symmetric_eigen_desc(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::<f64>::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.rb()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn column(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn mat_vec(m: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    let mut y = vec![0.0; m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = m.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// `max |a - a^T| / max |a|` for a dense square matrix.
pub fn dense_symmetry_defect(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(a[(i, j)].abs());
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}
