//! Patch operators and localized orthogonal decomposition (LOD) basis
//! functions.
//!
//! On a patch `ω` with free DOFs `A`, and the piecewise-constant pairing
//! `C[(q,k), j] = ∫_{T_q} (φ_j)_k`, every function `ψ = A⁻¹ Cᵀ c` is the
//! Dirichlet solution for the piecewise-constant load with coefficients `c`.
//! With `W = A⁻¹ Cᵀ` and `P = C / |T|`, the operator `D = P W` maps load
//! coefficients to cell averages, and the LOD basis function of `(T, k)` is
//! `W D⁻¹ e_(T,k)`.

use faer::Mat;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::{assemble_patch_stiffness, patch_pairing, PatchStiffness, ReferenceElement};
use crate::linalg::{column, dot, mat_vec, spd_inverse, Cholesky};
use crate::mesh::{MeshHierarchy, Patch, DIM};

/// Everything the basis constructions need on one patch.
pub struct PatchOperators {
    patch: Patch,
    stiffness: PatchStiffness,
    factor: Cholesky,
    /// `C` on all local DOFs, `DIM * n_e` rows.
    pairing: Mat<f64>,
    /// `A⁻¹ Cᵀ` on the interior DOFs.
    w: Mat<f64>,
    d_op: Mat<f64>,
    companions: Mat<f64>,
    cell_volume: f64,
}

impl std::fmt::Debug for PatchOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatchOperators")
            .field("center", &self.patch.center())
            .field("interior_dofs", &self.patch.num_interior_dofs())
            .finish()
    }
}

impl PatchOperators {
    pub fn new(
        mesh: &MeshHierarchy,
        field: &CoefficientField,
        reference: &ReferenceElement,
        patch: Patch,
    ) -> Result<Self> {
        let stiffness = assemble_patch_stiffness(mesh, field, reference, &patch)?;
        let factor = stiffness
            .constrained
            .cholesky(format!("patch stiffness at coarse cell {}", patch.center()))?;
        let pairing = patch_pairing(mesh, &patch);
        let interior = patch.interior_dofs();
        let rows = pairing.nrows();
        let mut w = Mat::<f64>::from_fn(interior.len(), rows, |i, j| pairing[(j, interior[i])]);
        factor.solve_in_place(w.as_mut());
        let cell_volume = mesh.coarse_cell_volume();
        // C has at most four nonzeros per column
        let columns: Vec<Vec<(usize, f64)>> = interior
            .iter()
            .map(|&ld| {
                (0..rows)
                    .filter(|&i| pairing[(i, ld)] != 0.0)
                    .map(|i| (i, pairing[(i, ld)] / cell_volume))
                    .collect()
            })
            .collect();
        let mut d_op = Mat::<f64>::zeros(rows, rows);
        for j in 0..rows {
            let wj = w.col(j);
            for (t, entries) in columns.iter().enumerate() {
                let wt = wj[t];
                for &(i, c) in entries {
                    d_op[(i, j)] += c * wt;
                }
            }
        }
        // exact symmetry before inversion
        for j in 0..rows {
            for i in 0..j {
                let s = 0.5 * (d_op[(i, j)] + d_op[(j, i)]);
                d_op[(i, j)] = s;
                d_op[(j, i)] = s;
            }
        }
        let companions = spd_inverse(
            d_op.as_ref(),
            &format!("projected solution operator at coarse cell {}", patch.center()),
        )?;
        Ok(Self { patch, stiffness, factor, pairing, w, d_op, companions, cell_volume })
    }

    /// Builds the order-`m` patch of `center` and its operators.
    pub fn for_center(
        mesh: &MeshHierarchy,
        field: &CoefficientField,
        reference: &ReferenceElement,
        center: usize,
        m: usize,
    ) -> Result<Self> {
        let patch = crate::mesh::build_patch(mesh, center, m)?;
        Self::new(mesh, field, reference, patch)
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn stiffness(&self) -> &PatchStiffness {
        &self.stiffness
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn pairing(&self) -> &Mat<f64> {
        &self.pairing
    }

    /// `A⁻¹ Cᵀ`.
    pub fn w(&self) -> &Mat<f64> {
        &self.w
    }

    /// `D = P A⁻¹ Cᵀ`.
    pub fn d_op(&self) -> &Mat<f64> {
        &self.d_op
    }

    /// `D⁻¹`; column `j` holds the load coefficients of the LOD basis
    /// function with averages `e_j`.
    pub fn companions(&self) -> &Mat<f64> {
        &self.companions
    }

    /// Number of piecewise-constant coefficients, `DIM * n_e`.
    pub fn num_coefficients(&self) -> usize {
        self.pairing.nrows()
    }

    /// Coefficient index of `(center, k)`.
    pub fn center_index(&self, k: usize) -> usize {
        let q = self
            .patch
            .coarse_local_index(self.patch.center())
            .expect("center lies in its patch");
        k * self.patch.num_coarse_cells() + q
    }

    /// `W c` on the interior DOFs.
    pub fn solution_of(&self, coefficients: &[f64]) -> Vec<f64> {
        mat_vec(self.w.as_ref(), coefficients)
    }

    /// Cell averages `P v` of interior values `v`.
    pub fn project(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.num_coefficients()];
        for (&ld, v) in self.patch.interior_dofs().iter().zip(interior_values) {
            for (i, pi) in p.iter_mut().enumerate() {
                *pi += self.pairing[(i, ld)] * v;
            }
        }
        p.iter().map(|x| x / self.cell_volume).collect()
    }

    /// Zero-extends interior values to all local DOFs.
    pub fn extend(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.patch.num_local_dofs()];
        for (&ld, &v) in self.patch.interior_dofs().iter().zip(interior_values) {
            full[ld] = v;
        }
        full
    }

    /// Packs the basis function with load coefficients `coefficients`,
    /// normalized in the energy norm.
    pub fn make_basis(
        &self,
        mesh: &MeshHierarchy,
        component: usize,
        coefficients: Vec<f64>,
        info: BasisInfo,
    ) -> Result<LocalBasis> {
        let values = self.solution_of(&coefficients);
        let local = self.extend(&values);
        let applied = self.stiffness.unconstrained.matvec(&local);
        let energy_sq = dot(&local, &applied);
        let patch = &self.patch;
        LocalBasis {
            center: patch.center(),
            component,
            cell_box: patch.cell_box(),
            patch_cells: patch.coarse_cells().to_vec(),
            dofs: patch.interior_global_dofs().to_vec(),
            values,
            applied_dofs: (0..patch.num_local_dofs())
                .map(|ld| patch.global_dof_of_local(mesh, ld))
                .collect(),
            applied,
            coefficients,
            energy_norm: energy_sq.max(0.0).sqrt(),
            info,
        }
        .normalized()
    }
}

/// Diagnostics of a basis construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BasisInfo {
    /// Numerical rank of the localization system.
    pub rank: usize,
    /// Rank actually used after the stability loop.
    pub rank_used: usize,
    /// Localization residual at full rank.
    pub residual_full: f64,
    /// Localization residual at the accepted rank.
    pub residual_used: f64,
    /// `‖Π_H ψ − e_(T,k)‖_∞` before normalization.
    pub deviation: f64,
}

/// A localized basis function, supported on its patch.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub center: usize,
    pub component: usize,
    /// Inclusive coarse cell box of the patch.
    pub cell_box: ([usize; DIM], [usize; DIM]),
    /// Coarse cells of the patch, indexing `coefficients`.
    pub patch_cells: Vec<usize>,
    /// Global DOFs of the patch interior.
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
    /// Global DOFs of every patch node, boundary included.
    pub applied_dofs: Vec<usize>,
    /// Patch stiffness times the basis, on `applied_dofs`.
    pub applied: Vec<f64>,
    /// Piecewise-constant load coefficients, `k * n_e + q`.
    pub coefficients: Vec<f64>,
    /// Energy norm before normalization.
    pub energy_norm: f64,
    pub info: BasisInfo,
}

impl LocalBasis {
    /// Scales to unit energy norm. `energy_norm` keeps the original value.
    pub fn normalized(mut self) -> Result<Self> {
        let e = self.energy_norm;
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::NonFiniteBasis { center: self.center });
        }
        let s = 1.0 / e;
        for v in self
            .values
            .iter_mut()
            .chain(self.applied.iter_mut())
            .chain(self.coefficients.iter_mut())
        {
            *v *= s;
        }
        Ok(self)
    }

    /// Whether the two patches share a coarse cell.
    pub fn overlaps(&self, other: &LocalBasis) -> bool {
        let (a_lo, a_hi) = self.cell_box;
        let (b_lo, b_hi) = other.cell_box;
        (0..DIM).all(|d| a_lo[d] <= b_hi[d] && b_lo[d] <= a_hi[d])
    }

    /// Values on all global DOFs.
    pub fn to_global(&self, num_dofs: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_dofs];
        for (&d, &x) in self.dofs.iter().zip(&self.values) {
            v[d] = x;
        }
        v
    }
}

/// Energy-normalized LOD basis function of `(center, k)`.
pub fn lod_basis(ops: &PatchOperators, mesh: &MeshHierarchy, k: usize) -> Result<LocalBasis> {
    let j0 = ops.center_index(k);
    let coefficients = column(ops.companions().as_ref(), j0);
    ops.make_basis(mesh, k, coefficients, BasisInfo::default())
}

/// `D⁻¹` of a patch.
pub fn companion_matrix(ops: &PatchOperators) -> &Mat<f64> {
    ops.companions()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{constant_field, random_field};
    use crate::linalg::dense_symmetry_defect;

    fn setup(nc: usize, r: usize, center: usize, m: usize) -> (MeshHierarchy, PatchOperators) {
        let mesh = MeshHierarchy::new(nc, r).unwrap();
        let field = random_field(nc * r, 1.0, 100.0, 17).unwrap();
        let re = ReferenceElement::for_mesh(&mesh);
        let ops = PatchOperators::for_center(&mesh, &field, &re, center, m).unwrap();
        (mesh, ops)
    }

    /// `D` against a dense Schur complement `P A⁻¹ Pᵀ |T|`.
    #[test]
    fn d_operator_matches_dense_schur_complement() {
        let (mesh, ops) = setup(5, 4, 12, 1);
        assert_eq!(ops.patch().num_coarse_cells(), 9);
        let a = ops.stiffness().constrained.to_dense();
        let a_inv = spd_inverse(a.as_ref(), "dense").unwrap();
        let interior = ops.patch().interior_dofs();
        let vol = mesh.coarse_cell_volume();
        let p = Mat::<f64>::from_fn(ops.num_coefficients(), interior.len(), |i, j| {
            ops.pairing()[(i, interior[j])] / vol
        });
        let dense = &p * &a_inv * p.transpose() * faer::Scale(vol);
        let d = ops.d_op();
        let mut worst = 0.0f64;
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                worst = worst.max((d[(i, j)] - dense[(i, j)]).abs());
            }
        }
        let scale = (0..d.nrows()).map(|i| d[(i, i)].abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-8 * scale, "worst {worst}, scale {scale}");
        assert_eq!(dense_symmetry_defect(d.as_ref()), 0.0);
    }

    #[test]
    fn lod_basis_has_unit_averages() {
        let (mesh, ops) = setup(6, 4, 14, 2);
        for k in 0..DIM {
            let b = lod_basis(&ops, &mesh, k).unwrap();
            let avg = ops.project(&b.values);
            let j0 = ops.center_index(k);
            let peak = avg[j0];
            assert!(peak > 0.0);
            for (j, v) in avg.iter().enumerate() {
                let expect = if j == j0 { peak } else { 0.0 };
                assert!((v - expect).abs() < 1e-10 * peak, "j={j}: {v}");
            }
            // unit energy: ψᵀ K ψ over the applied vector
            let local = ops.extend(&b.values);
            assert!((dot(&local, &b.applied) - 1.0).abs() < 1e-12);
            assert!((1.0 / b.energy_norm - peak).abs() < 1e-10 * peak);
        }
    }

    /// The load-to-solution map satisfies `A W = Cᵀ` on the interior, so the
    /// flux functional vanishes away from the patch boundary.
    #[test]
    fn galerkin_identity_on_interior_rows() {
        let (_, ops) = setup(5, 4, 12, 1);
        let interior = ops.patch().interior_dofs();
        for j in 0..ops.num_coefficients() {
            let wj = ops.extend(&column(ops.w().as_ref(), j));
            let kw = ops.stiffness().unconstrained.matvec(&wj);
            for &ld in interior {
                assert!((kw[ld] - ops.pairing()[(j, ld)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn companions_invert_d() {
        let (_, ops) = setup(4, 4, 5, 1);
        let prod = ops.d_op() * ops.companions();
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn whole_domain_patch_basis_is_finite() {
        let mesh = MeshHierarchy::new(2, 4).unwrap();
        let field = constant_field(1.0, 1.0).unwrap();
        let re = ReferenceElement::for_mesh(&mesh);
        let ops = PatchOperators::for_center(&mesh, &field, &re, 0, 3).unwrap();
        assert!(ops.patch().covers_domain());
        let b = lod_basis(&ops, &mesh, 1).unwrap();
        assert!(b.values.iter().all(|v| v.is_finite()));
        assert_eq!(b.component, 1);
    }

    #[test]
    fn zero_basis_is_rejected() {
        let (mesh, ops) = setup(4, 4, 5, 1);
        let zeros = vec![0.0; ops.num_coefficients()];
        let err = ops.make_basis(&mesh, 0, zeros, BasisInfo::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteBasis { center: 5 }));
    }
}
