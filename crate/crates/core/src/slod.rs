//! Super-localized basis functions.
//!
//! A patch function `ψ = A⁻¹ Cᵀ c` is the restriction of a global one up to
//! its conormal flux on `Σ_ω = ∂ω \ ∂Ω`. That flux, tested with the fine
//! hat functions on `Σ_ω`, is the linear map `B c`. Writing the coefficients
//! in terms of the cell averages of `ψ` (through `D⁻¹`), fixing the average
//! on the center cell to one and minimizing `‖B c‖` by truncated least
//! squares gives a basis function with a tiny localization residual. The rank
//! of the truncation is lowered until the averages stay within the stability
//! tolerance of the LOD averages `e_(T,k)`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{column, norm2, symmetric_eigen_desc};
use crate::lod::{lod_basis, BasisInfo, LocalBasis, PatchOperators};
use crate::mesh::MeshHierarchy;

pub const DEFAULT_STABILITY_TOLERANCE: f64 = 0.5;

/// Relative cut-off for the eigenvalues of the normal matrix.
const RANK_TOLERANCE: f64 = 1e-12;

/// Flux matrix `B[(s,p), (q,k)]`: the conormal flux of `W e_(q,k)` tested
/// with the hat function of node `p`, component `s`, on `Σ_ω`. Rows follow
/// [`crate::mesh::Patch::boundary_dofs`].
pub fn assemble_b(ops: &PatchOperators) -> Mat<f64> {
    let patch = ops.patch();
    let boundary = patch.boundary_dofs();
    let n = ops.num_coefficients();
    let interior = patch.interior_dofs();
    let mut w_full = Mat::<f64>::zeros(patch.num_local_dofs(), n);
    for j in 0..n {
        for (t, &ld) in interior.iter().enumerate() {
            w_full[(ld, j)] = ops.w()[(t, j)];
        }
    }
    let kw = ops.stiffness().unconstrained.mul_dense(w_full.as_ref());
    Mat::<f64>::from_fn(boundary.len(), n, |i, j| {
        kw[(boundary[i], j)] - ops.pairing()[(j, boundary[i])]
    })
}

/// Truncated least-squares problem `min ‖B D̄ c + B d‖` for one `(T, k)`.
///
/// `d` is the LOD column `D⁻¹ e_(T,k)` and `D̄` holds the remaining columns
/// of `D⁻¹`.
#[derive(Debug, Clone)]
pub struct LocalizationProblem {
    center_index: usize,
    bd: Mat<f64>,
    bdv: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    /// `vᵢᵀ (B D̄)ᵀ B d`.
    y: Vec<f64>,
    rank: usize,
}

impl LocalizationProblem {
    pub fn new(ops: &PatchOperators, b: &Mat<f64>, k: usize) -> Result<Self> {
        let j0 = ops.center_index(k);
        let n = ops.num_coefficients();
        let comp = ops.companions();
        let others: Vec<usize> = (0..n).filter(|&j| j != j0).collect();
        let dbar = Mat::<f64>::from_fn(n, n - 1, |i, j| comp[(i, others[j])]);
        let bd = b * &dbar;
        let d = Mat::<f64>::from_fn(n, 1, |i, _| comp[(i, j0)]);
        let bdv_mat = b * &d;
        let bdv: Vec<f64> = (0..bdv_mat.nrows()).map(|i| bdv_mat[(i, 0)]).collect();
        let normal = bd.transpose() * &bd;
        let (eigenvalues, eigenvectors) = symmetric_eigen_desc(normal.as_ref())?;
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decomposition(format!(
                "non-finite eigenvalue in the localization system of coarse cell {}",
                ops.patch().center()
            )));
        }
        let cutoff = (eigenvalues.first().copied().unwrap_or(0.0) * RANK_TOLERANCE).max(1e-30);
        let rank = eigenvalues.iter().take_while(|&&s| s > cutoff).count();
        let rhs: Vec<f64> = (0..bd.ncols())
            .map(|j| (0..bd.nrows()).map(|i| bd[(i, j)] * bdv[i]).sum())
            .collect();
        let y = (0..eigenvalues.len())
            .map(|i| (0..rhs.len()).map(|j| eigenvectors[(j, i)] * rhs[j]).sum())
            .collect();
        Ok(Self { center_index: j0, bd, bdv, eigenvalues, eigenvectors, y, rank })
    }

    /// Numerical rank of `B D̄`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `B D̄`.
    pub fn bd(&self) -> &Mat<f64> {
        &self.bd
    }

    /// `B d`.
    pub fn bdv(&self) -> &[f64] {
        &self.bdv
    }

    /// Average-space coefficients using the leading `rank_used` eigenpairs.
    pub fn solution(&self, rank_used: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.eigenvectors.nrows()];
        for i in 0..rank_used.min(self.rank) {
            let s = self.y[i] / self.eigenvalues[i];
            for (j, cj) in c.iter_mut().enumerate() {
                *cj -= s * self.eigenvectors[(j, i)];
            }
        }
        c
    }

    /// `‖B D̄ c + B d‖`.
    pub fn residual(&self, c: &[f64]) -> f64 {
        let r: Vec<f64> = (0..self.bd.nrows())
            .map(|i| (0..c.len()).map(|j| self.bd[(i, j)] * c[j]).sum::<f64>() + self.bdv[i])
            .collect();
        norm2(&r)
    }

    /// `‖B d‖² − Σ_{i<r} yᵢ² / σᵢ`, the squared residual at rank `r` by
    /// orthogonality.
    pub fn residual_squared_identity(&self, rank_used: usize) -> f64 {
        let base: f64 = self.bdv.iter().map(|v| v * v).sum();
        base - (0..rank_used.min(self.rank))
            .map(|i| self.y[i] * self.y[i] / self.eigenvalues[i])
            .sum::<f64>()
    }

    /// Cell averages of the candidate for average-space coefficients `c`:
    /// one on the center, `c` elsewhere.
    pub fn averages(&self, c: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(c.len() + 1);
        p.extend_from_slice(&c[..self.center_index]);
        p.push(1.0);
        p.extend_from_slice(&c[self.center_index..]);
        p
    }

    /// Load coefficients `d + D̄ c`.
    pub fn load_coefficients(&self, ops: &PatchOperators, c: &[f64]) -> Vec<f64> {
        let comp = ops.companions();
        let p = self.averages(c);
        (0..comp.nrows())
            .map(|i| (0..p.len()).map(|j| comp[(i, j)] * p[j]).sum())
            .collect()
    }
}

/// `max_{j ≠ center} |p_j| / |p_center|`: how far the cell averages `p` of a
/// basis function are from a multiple of `e_center`.
pub fn stability_deviation(projection: &[f64], center: usize) -> f64 {
    let scale = projection[center].abs();
    if scale == 0.0 {
        return f64::INFINITY;
    }
    projection
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != center)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
        / scale
}

/// Super-localized, energy-normalized basis function of `(center, k)`.
///
/// Patches without an interface (the whole domain) fall back to the LOD
/// basis function.
pub fn superlocalize(
    ops: &PatchOperators,
    mesh: &MeshHierarchy,
    k: usize,
    stability_tolerance: f64,
) -> Result<LocalBasis> {
    let b = assemble_b(ops);
    superlocalize_with(ops, mesh, &b, k, stability_tolerance)
}

/// [`superlocalize`] with a precomputed flux matrix, shared across components.
pub fn superlocalize_with(
    ops: &PatchOperators,
    mesh: &MeshHierarchy,
    b: &Mat<f64>,
    k: usize,
    stability_tolerance: f64,
) -> Result<LocalBasis> {
    if !(stability_tolerance >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "stability tolerance must be non-negative, got {stability_tolerance}"
        )));
    }
    if b.nrows() == 0 {
        return lod_basis(ops, mesh, k);
    }
    let problem = LocalizationProblem::new(ops, b, k)?;
    let rank = problem.rank();
    let full = problem.solution(rank);
    let residual_full = problem.residual(&full);
    let mut rank_used = rank;
    let mut c = full;
    loop {
        let deviation = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if deviation <= stability_tolerance || rank_used == 0 {
            break;
        }
        rank_used -= 1;
        c = problem.solution(rank_used);
    }
    let info = BasisInfo {
        rank,
        rank_used,
        residual_full,
        residual_used: problem.residual(&c),
        deviation: c.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let coefficients = problem.load_coefficients(ops, &c);
    let mut basis = ops.make_basis(mesh, k, coefficients, info)?;
    basis.info.residual_full /= basis.energy_norm;
    basis.info.residual_used /= basis.energy_norm;
    Ok(basis)
}

/// Interface flux of an interior-supported basis function, `‖B c‖`, with `c`
/// its (normalized) load coefficients.
pub fn flux_residual(b: &Mat<f64>, coefficients: &[f64]) -> f64 {
    let r: Vec<f64> = (0..b.nrows())
        .map(|i| (0..coefficients.len()).map(|j| b[(i, j)] * coefficients[j]).sum())
        .collect();
    norm2(&r)
}

/// Column `j` of `B`.
pub fn b_column(b: &Mat<f64>, j: usize) -> Vec<f64> {
    column(b.as_ref(), j)
}
