//! Coarse Galerkin systems in the span of the localized bases, their
//! solution, and the diagnostics computed on them.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;

use crate::coeff::{CoefficientField, RhsField};
use crate::error::{Error, Result};
use crate::fem::{load_vector, solve_coarse_fem, FineOperators, ReferenceElement};
use crate::linalg::{dot, norm2, symmetric_eigenvalues, SparseSymMatrix};
use crate::lod::{lod_basis, LocalBasis, PatchOperators};
use crate::mesh::{MeshHierarchy, DIM};
use crate::slod::{assemble_b, superlocalize_with};

/// Tolerated relative asymmetry of an assembled coarse matrix.
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fem,
    Lod,
    Slod,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fem => "fem",
            Self::Lod => "lod",
            Self::Slod => "slod",
        }
    }

    pub fn uses_patches(self) -> bool {
        !matches!(self, Self::Fem)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fem" => Ok(Self::Fem),
            "lod" => Ok(Self::Lod),
            "slod" => Ok(Self::Slod),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Basis functions for every `(T, k)`, index `k * N_H + T`.
pub fn build_bases(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    method: Method,
    m: usize,
    stability_tolerance: f64,
) -> Result<Vec<LocalBasis>> {
    if !method.uses_patches() {
        return Err(Error::InvalidInput("coarse FEM has no patch basis".into()));
    }
    field.check_resolution(mesh)?;
    let reference = ReferenceElement::for_mesh(mesh);
    let n_h = mesh.num_coarse_cells();
    let per_cell: Vec<Vec<LocalBasis>> = (0..n_h)
        .into_par_iter()
        .map(|center| {
            let ops = PatchOperators::for_center(mesh, field, &reference, center, m)?;
            match method {
                Method::Slod => {
                    let b = assemble_b(&ops);
                    (0..DIM)
                        .map(|k| superlocalize_with(&ops, mesh, &b, k, stability_tolerance))
                        .collect()
                }
                _ => (0..DIM).map(|k| lod_basis(&ops, mesh, k)).collect(),
            }
        })
        .collect::<Result<_>>()?;
    let mut bases: Vec<Option<LocalBasis>> = vec![None; DIM * n_h];
    for (t, pair) in per_cell.into_iter().enumerate() {
        for (k, b) in pair.into_iter().enumerate() {
            bases[k * n_h + t] = Some(b);
        }
    }
    Ok(bases.into_iter().map(|b| b.expect("every basis built")).collect())
}

/// `Â_ij = a(ψ_j, ψ_i)`, computed from the stored patch products.
pub fn assemble_coarse(mesh: &MeshHierarchy, bases: &[LocalBasis]) -> Result<SparseSymMatrix> {
    let n = bases.len();
    let mut scratch = vec![0.0; mesh.num_dofs()];
    let mut triplets = Vec::new();
    for (i, bi) in bases.iter().enumerate() {
        for (&d, &v) in bi.applied_dofs.iter().zip(&bi.applied) {
            scratch[d] += v;
        }
        for (j, bj) in bases.iter().enumerate() {
            if !bi.overlaps(bj) {
                continue;
            }
            let a: f64 = bj.dofs.iter().zip(&bj.values).map(|(&d, &v)| scratch[d] * v).sum();
            triplets.push((j, i, a));
        }
        for &d in &bi.applied_dofs {
            scratch[d] = 0.0;
        }
    }
    let raw = SparseSymMatrix::from_triplets(n, &triplets)?;
    let defect = raw.symmetry_defect();
    if defect > SYMMETRY_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "coarse matrix is not symmetric (relative defect {defect:e})"
        )));
    }
    let symmetric: Vec<(usize, usize, f64)> = triplets
        .iter()
        .map(|&(i, j, _)| (i, j, 0.5 * (raw.get(i, j) + raw.get(j, i))))
        .collect();
    SparseSymMatrix::from_triplets(n, &symmetric)
}

/// `b_i = (f, ψ_i)` from the fine load vector.
pub fn assemble_coarse_load(bases: &[LocalBasis], fine_load: &[f64]) -> Vec<f64> {
    bases
        .iter()
        .map(|b| b.dofs.iter().zip(&b.values).map(|(&d, &v)| fine_load[d] * v).sum())
        .collect()
}

/// `Σ_i c_i ψ_i` on all fine DOFs.
pub fn reconstruct(mesh: &MeshHierarchy, bases: &[LocalBasis], coefficients: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; mesh.num_dofs()];
    for (b, &c) in bases.iter().zip(coefficients) {
        for (&d, &v) in b.dofs.iter().zip(&b.values) {
            u[d] += c * v;
        }
    }
    u
}

/// Solution of a coarse Galerkin system.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    pub matrix: SparseSymMatrix,
    pub coefficients: Vec<f64>,
    /// Fine-mesh representation on all DOFs.
    pub fine: Vec<f64>,
}

pub fn solve_coarse(
    mesh: &MeshHierarchy,
    bases: &[LocalBasis],
    fine_load: &[f64],
) -> Result<CoarseSolution> {
    let matrix = assemble_coarse(mesh, bases)?;
    let load = assemble_coarse_load(bases, fine_load);
    let coefficients = matrix.cholesky("coarse system")?.solve(&load);
    let lnorm = norm2(&load);
    if lnorm > 0.0 {
        let r: Vec<f64> = matrix.matvec(&coefficients).iter().zip(&load).map(|(a, b)| a - b).collect();
        let rel = norm2(&r) / lnorm;
        if !(rel <= 1e-8) {
            return Err(Error::SolverBreakdown { context: "coarse system".into(), residual: rel });
        }
    }
    let fine = reconstruct(mesh, bases, &coefficients);
    Ok(CoarseSolution { matrix, coefficients, fine })
}

/// Relative errors against a fine reference solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Errors {
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
}

pub fn compute_errors(ops: &FineOperators, reference: &[f64], approx: &[f64]) -> Errors {
    let e: Vec<f64> = reference.iter().zip(approx).map(|(a, b)| a - b).collect();
    let rel = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    Errors {
        l2: rel(ops.l2_norm(&e), ops.l2_norm(reference)),
        h1_semi: rel(ops.h1_seminorm(&e), ops.h1_seminorm(reference)),
        energy: rel(ops.energy_norm(&e), ops.energy_norm(reference)),
    }
}

/// Spectral condition number estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub value: f64,
    /// Set when an iteration hit its cap before converging.
    pub approximate: bool,
}

const EIG_TOLERANCE: f64 = 1e-6;
const EIG_MAX_ITERS: usize = 20_000;

fn start_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract()).collect();
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Dominant eigenvalue of the SPD operator `apply` by power iteration,
/// stopped once `‖Ax − θx‖ ≤ tol · θ`.
fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> (f64, bool) {
    let mut x = start_vector(n);
    let mut theta = 0.0;
    for _ in 0..EIG_MAX_ITERS {
        let y = apply(&x);
        theta = dot(&x, &y);
        let r: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - theta * b).collect();
        if norm2(&r) <= EIG_TOLERANCE * theta.abs() {
            return (theta, false);
        }
        let s = norm2(&y);
        if s == 0.0 {
            return (0.0, false);
        }
        x = y.into_iter().map(|v| v / s).collect();
    }
    (theta, true)
}

/// `κ(A) = λ_max / λ_min`, power iteration on `A` and on `A⁻¹` (through a
/// sparse Cholesky factorization).
pub fn estimate_condition_number(a: &SparseSymMatrix) -> Result<ConditionEstimate> {
    let n = a.dim();
    let factor = a.cholesky("condition number estimate")?;
    let (lambda_max, approx_max) = power_iteration(n, |x| a.matvec(x));
    let (inv_max, approx_min) = power_iteration(n, |x| factor.solve(x));
    let lambda_min = 1.0 / inv_max;
    Ok(ConditionEstimate {
        lambda_max,
        lambda_min,
        value: lambda_max / lambda_min,
        approximate: approx_max || approx_min,
    })
}

/// Dense spectral condition number, for small systems and checks.
pub fn dense_condition_number(a: &SparseSymMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(a.to_dense().as_ref())?;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

/// Smallest eigenvalue of the Gram matrix `G = |T| C̄ᵀ C̄` of the piecewise-
/// constant load coefficients of all bases, zero-extended to the whole mesh.
pub fn companion_gram_diagnostic(mesh: &MeshHierarchy, bases: &[LocalBasis]) -> Result<f64> {
    let n_h = mesh.num_coarse_cells();
    let rows = DIM * n_h;
    let mut c = Mat::<f64>::zeros(rows, bases.len());
    for (j, b) in bases.iter().enumerate() {
        let n_e = b.patch_cells.len();
        for (idx, &v) in b.coefficients.iter().enumerate() {
            let (k, q) = (idx / n_e, idx % n_e);
            c[(k * n_h + b.patch_cells[q], j)] = v;
        }
    }
    let g = c.transpose() * &c * faer::Scale(mesh.coarse_cell_volume());
    let ev = symmetric_eigenvalues(g.as_ref())?;
    Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
}

/// Output of one method on one mesh.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub solution: Vec<f64>,
    pub bases: Vec<LocalBasis>,
    pub matrix: Option<SparseSymMatrix>,
    pub wall_time_basis: f64,
    pub wall_time_solve: f64,
}

impl MethodRun {
    /// Largest normalized localization residual over all bases.
    pub fn max_residual_surrogate(&self) -> Option<f64> {
        self.bases.iter().map(|b| b.info.residual_used).reduce(f64::max)
    }
}

/// Solves with `method` on `mesh`; `m` and the tolerance are ignored for FEM.
pub fn run_method(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    rhs: &RhsField,
    method: Method,
    m: usize,
    stability_tolerance: f64,
) -> Result<MethodRun> {
    if method == Method::Fem {
        let t = Instant::now();
        let solution = solve_coarse_fem(mesh, field, rhs)?;
        return Ok(MethodRun {
            solution,
            bases: Vec::new(),
            matrix: None,
            wall_time_basis: 0.0,
            wall_time_solve: t.elapsed().as_secs_f64(),
        });
    }
    let t = Instant::now();
    let bases = build_bases(mesh, field, method, m, stability_tolerance)?;
    let wall_time_basis = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let load = load_vector(mesh, rhs);
    let sol = solve_coarse(mesh, &bases, &load)?;
    Ok(MethodRun {
        solution: sol.fine,
        bases,
        matrix: Some(sol.matrix),
        wall_time_basis,
        wall_time_solve: t.elapsed().as_secs_f64(),
    })
}
