//! Q1 vector finite elements on the fine mesh: element matrices, global and
//! patch assembly, the piecewise-constant projection, the fine reference
//! solve and the coarse FEM baseline.

use std::io::Write;
use std::path::Path;

use faer::Mat;

use crate::coeff::{CoefficientField, RhsField};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Cholesky, SparseSymMatrix};
use crate::mesh::{MeshHierarchy, Patch, CELL_NODES, DIM};

/// Vector DOFs per element, ordered `k * 4 + a` (component-major).
pub const ELEM_DOFS: usize = DIM * CELL_NODES;

pub type ElemMat = [[f64; ELEM_DOFS]; ELEM_DOFS];
pub type ElemVec = [f64; ELEM_DOFS];

const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Q1 shape functions on `[0,1]²`, nodes `(0,0), (1,0), (0,1), (1,1)`.
pub fn shape(xi: f64, eta: f64) -> [f64; CELL_NODES] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        (1.0 - xi) * eta,
        xi * eta,
    ]
}

/// Physical gradients of the shape functions on an `h[0] × h[1]` cell.
pub fn shape_gradients(xi: f64, eta: f64, h: [f64; DIM]) -> [[f64; DIM]; CELL_NODES] {
    [
        [-(1.0 - eta) / h[0], -(1.0 - xi) / h[1]],
        [(1.0 - eta) / h[0], -xi / h[1]],
        [-eta / h[0], (1.0 - xi) / h[1]],
        [eta / h[0], xi / h[1]],
    ]
}

fn gauss_points() -> impl Iterator<Item = (f64, f64)> {
    GAUSS_1D
        .iter()
        .flat_map(|&eta| GAUSS_1D.iter().map(move |&xi| (xi, eta)))
}

/// Element matrices of a single fine cell, shared by the whole uniform mesh.
///
/// Stiffness is `mu * k_mu + lambda * k_lambda`, with `k_mu` the `2 ε:ε`
/// form and `k_lambda` the `div·div` form.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub h: [f64; DIM],
    pub k_mu: ElemMat,
    pub k_lambda: ElemMat,
    /// `∇u : ∇v`.
    pub grad: ElemMat,
    pub mass: ElemMat,
}

impl ReferenceElement {
    pub fn new(h: [f64; DIM]) -> Self {
        let mut k_mu = [[0.0; ELEM_DOFS]; ELEM_DOFS];
        let mut k_lambda = [[0.0; ELEM_DOFS]; ELEM_DOFS];
        let mut grad = [[0.0; ELEM_DOFS]; ELEM_DOFS];
        let mut mass = [[0.0; ELEM_DOFS]; ELEM_DOFS];
        let w = 0.25 * h[0] * h[1];
        for (xi, eta) in gauss_points() {
            let n = shape(xi, eta);
            let g = shape_gradients(xi, eta, h);
            for k in 0..DIM {
                for a in 0..CELL_NODES {
                    let i = k * CELL_NODES + a;
                    for l in 0..DIM {
                        for b in 0..CELL_NODES {
                            let j = l * CELL_NODES + b;
                            let gg = dot(&g[a], &g[b]);
                            let same = if k == l { 1.0 } else { 0.0 };
                            k_mu[i][j] += w * (same * gg + g[a][l] * g[b][k]);
                            k_lambda[i][j] += w * g[a][k] * g[b][l];
                            grad[i][j] += w * same * gg;
                            mass[i][j] += w * same * n[a] * n[b];
                        }
                    }
                }
            }
        }
        Self { h, k_mu, k_lambda, grad, mass }
    }

    pub fn for_mesh(mesh: &MeshHierarchy) -> Self {
        Self::new(mesh.fine_h())
    }

    pub fn stiffness(&self, lambda: f64, mu: f64) -> ElemMat {
        let mut k = [[0.0; ELEM_DOFS]; ELEM_DOFS];
        for i in 0..ELEM_DOFS {
            for j in 0..ELEM_DOFS {
                k[i][j] = mu * self.k_mu[i][j] + lambda * self.k_lambda[i][j];
            }
        }
        k
    }
}

/// Load contributions `∫ f · φ` on one fine cell, 2×2 Gauss.
pub fn element_load(mesh: &MeshHierarchy, rhs: &RhsField, cell: usize) -> ElemVec {
    let h = mesh.fine_h();
    let o = mesh.fine_cell_origin(cell);
    let w = 0.25 * h[0] * h[1];
    let mut fe = [0.0; ELEM_DOFS];
    for (xi, eta) in gauss_points() {
        let n = shape(xi, eta);
        let f = rhs.eval([o[0] + xi * h[0], o[1] + eta * h[1]]);
        for k in 0..DIM {
            for a in 0..CELL_NODES {
                fe[k * CELL_NODES + a] += w * f[k] * n[a];
            }
        }
    }
    fe
}

/// Bilinear form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Stiffness,
    Gradient,
    Mass,
}

/// Assembles `form` over `cells`. `nodes_of` gives the 4 cell nodes in the
/// target numbering, whose DOFs are `comp * n_nodes + node`; `index` maps
/// such a DOF to a matrix row or drops it.
fn assemble_cells(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    reference: &ReferenceElement,
    cells: &[usize],
    form: Form,
    n_nodes: usize,
    nodes_of: impl Fn(usize) -> [usize; CELL_NODES],
    index: impl Fn(usize) -> Option<usize>,
    n: usize,
) -> Result<SparseSymMatrix> {
    let mut triplets = Vec::with_capacity(cells.len() * ELEM_DOFS * ELEM_DOFS);
    let constant_ke = match form {
        Form::Gradient => Some(reference.grad),
        Form::Mass => Some(reference.mass),
        Form::Stiffness => None,
    };
    for &cell in cells {
        let ke = match constant_ke {
            Some(ke) => ke,
            None => {
                let (lambda, mu) = field.lame_on_fine_cell(mesh, cell);
                reference.stiffness(lambda, mu)
            }
        };
        let nodes = nodes_of(cell);
        let rows: [Option<usize>; ELEM_DOFS] =
            std::array::from_fn(|e| index((e / CELL_NODES) * n_nodes + nodes[e % CELL_NODES]));
        for (i, ri) in rows.iter().enumerate() {
            let Some(ri) = *ri else { continue };
            for (j, rj) in rows.iter().enumerate() {
                if let Some(rj) = *rj {
                    // mirror one triangle so duplicates sum identically
                    let v = if ri <= rj { ke[i][j] } else { ke[j][i] };
                    triplets.push((ri, rj, v));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(n, &triplets)
}

/// Global DOFs not on `∂Ω`.
#[derive(Debug, Clone)]
pub struct FreeDofs {
    free: Vec<usize>,
    index: Vec<Option<usize>>,
}

impl FreeDofs {
    pub fn new(mesh: &MeshHierarchy) -> Self {
        let mut free = Vec::new();
        let mut index = vec![None; mesh.num_dofs()];
        for dof in 0..mesh.num_dofs() {
            let (node, _) = mesh.dof_node(dof);
            if !mesh.is_boundary_node(node) {
                index[dof] = Some(free.len());
                free.push(dof);
            }
        }
        Self { free, index }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn global(&self) -> &[usize] {
        &self.free
    }

    pub fn index(&self, dof: usize) -> Option<usize> {
        self.index[dof]
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn extend(&self, reduced: &[f64], num_dofs: usize) -> Vec<f64> {
        let mut full = vec![0.0; num_dofs];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }
}

/// Global fine-mesh form restricted to the free DOFs.
pub fn assemble_global(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    form: Form,
    free: &FreeDofs,
) -> Result<SparseSymMatrix> {
    let reference = ReferenceElement::for_mesh(mesh);
    let cells: Vec<usize> = (0..mesh.num_fine_cells()).collect();
    assemble_cells(
        mesh,
        field,
        &reference,
        &cells,
        form,
        mesh.num_nodes(),
        |c| mesh.fine_cell_nodes(c),
        |d| free.index(d),
        free.len(),
    )
}

/// Global stiffness on all DOFs, boundary included.
pub fn assemble_global_unconstrained(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
) -> Result<SparseSymMatrix> {
    let reference = ReferenceElement::for_mesh(mesh);
    let cells: Vec<usize> = (0..mesh.num_fine_cells()).collect();
    assemble_cells(
        mesh,
        field,
        &reference,
        &cells,
        Form::Stiffness,
        mesh.num_nodes(),
        |c| mesh.fine_cell_nodes(c),
        Some,
        mesh.num_dofs(),
    )
}

/// Patch stiffness on all patch DOFs (`unconstrained`) and on the interior
/// DOFs only (`constrained`).
#[derive(Debug, Clone)]
pub struct PatchStiffness {
    pub unconstrained: SparseSymMatrix,
    pub constrained: SparseSymMatrix,
}

pub fn assemble_patch_stiffness(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    reference: &ReferenceElement,
    patch: &Patch,
) -> Result<PatchStiffness> {
    let n_nodes = patch.num_local_nodes();
    let unconstrained = assemble_cells(
        mesh,
        field,
        reference,
        patch.fine_cells(),
        Form::Stiffness,
        n_nodes,
        |c| patch.local_cell_nodes(mesh, c),
        Some,
        patch.num_local_dofs(),
    )?;
    let constrained = assemble_cells(
        mesh,
        field,
        reference,
        patch.fine_cells(),
        Form::Stiffness,
        n_nodes,
        |c| patch.local_cell_nodes(mesh, c),
        |d| patch.interior_index(d),
        patch.num_interior_dofs(),
    )?;
    Ok(PatchStiffness { unconstrained, constrained })
}

/// `C[(q,k), j] = ∫_{T_q} (φ_j)_k` over all local patch DOFs; row `k * n_e + q`.
pub fn patch_pairing(mesh: &MeshHierarchy, patch: &Patch) -> Mat<f64> {
    let n_e = patch.num_coarse_cells();
    let mut c = Mat::<f64>::zeros(DIM * n_e, patch.num_local_dofs());
    let quarter = 0.25 * mesh.fine_cell_volume();
    for &cell in patch.fine_cells() {
        let q = patch.coarse_local_of_fine(mesh, cell);
        for node in patch.local_cell_nodes(mesh, cell) {
            for k in 0..DIM {
                c[(k * n_e + q, patch.local_dof(node, k))] += quarter;
            }
        }
    }
    c
}

/// `Π_H v`: averages over every coarse cell, index `k * N_H + q`.
pub fn coarse_averages(mesh: &MeshHierarchy, v: &[f64]) -> Vec<f64> {
    let n_h = mesh.num_coarse_cells();
    let mut avg = vec![0.0; DIM * n_h];
    let weight = 0.25 * mesh.fine_cell_volume() / mesh.coarse_cell_volume();
    for cell in 0..mesh.num_fine_cells() {
        let q = mesh.coarse_of_fine(cell);
        for node in mesh.fine_cell_nodes(cell) {
            for k in 0..DIM {
                avg[k * n_h + q] += weight * v[mesh.dof(node, k)];
            }
        }
    }
    avg
}

/// `Π_H f` for a function given pointwise, 2×2 Gauss on every fine cell.
pub fn project_function(mesh: &MeshHierarchy, f: impl Fn([f64; DIM]) -> [f64; DIM]) -> Vec<f64> {
    let n_h = mesh.num_coarse_cells();
    let h = mesh.fine_h();
    let w = 0.25 * mesh.fine_cell_volume() / mesh.coarse_cell_volume();
    let mut avg = vec![0.0; DIM * n_h];
    for cell in 0..mesh.num_fine_cells() {
        let q = mesh.coarse_of_fine(cell);
        let o = mesh.fine_cell_origin(cell);
        for (xi, eta) in gauss_points() {
            let v = f([o[0] + xi * h[0], o[1] + eta * h[1]]);
            for k in 0..DIM {
                avg[k * n_h + q] += w * v[k];
            }
        }
    }
    avg
}

/// L2 norm of a piecewise-constant field given by its coarse values.
pub fn piecewise_constant_l2(mesh: &MeshHierarchy, values: &[f64]) -> f64 {
    (mesh.coarse_cell_volume() * dot(values, values)).sqrt()
}

/// Global load `∫ f · φ_i` on all DOFs.
pub fn load_vector(mesh: &MeshHierarchy, rhs: &RhsField) -> Vec<f64> {
    let mut f = vec![0.0; mesh.num_dofs()];
    if rhs.is_zero() {
        return f;
    }
    for cell in 0..mesh.num_fine_cells() {
        let fe = element_load(mesh, rhs, cell);
        let nodes = mesh.fine_cell_nodes(cell);
        for (e, v) in fe.iter().enumerate() {
            f[mesh.dof(nodes[e % CELL_NODES], e / CELL_NODES)] += v;
        }
    }
    f
}

/// Fine-mesh operators used for the reference solve and for error norms.
pub struct FineOperators {
    num_dofs: usize,
    free: FreeDofs,
    stiffness: SparseSymMatrix,
    gradient: SparseSymMatrix,
    mass: SparseSymMatrix,
    factor: Cholesky,
}

impl std::fmt::Debug for FineOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FineOperators")
            .field("num_dofs", &self.num_dofs)
            .field("free", &self.free.len())
            .finish()
    }
}

impl FineOperators {
    pub fn assemble(mesh: &MeshHierarchy, field: &CoefficientField) -> Result<Self> {
        field.check_resolution(mesh)?;
        let free = FreeDofs::new(mesh);
        let stiffness = assemble_global(mesh, field, Form::Stiffness, &free)?;
        let gradient = assemble_global(mesh, field, Form::Gradient, &free)?;
        let mass = assemble_global(mesh, field, Form::Mass, &free)?;
        let factor = stiffness.cholesky("fine stiffness")?;
        Ok(Self { num_dofs: mesh.num_dofs(), free, stiffness, gradient, mass, factor })
    }

    pub fn free_dofs(&self) -> &FreeDofs {
        &self.free
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn gradient(&self) -> &SparseSymMatrix {
        &self.gradient
    }

    /// Solves `K u = F` on the free DOFs, `F` given on all DOFs. Fails if the
    /// relative residual exceeds `1e-10`.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        let f = self.free.restrict(load);
        let u = self.factor.solve(&f);
        let fnorm = norm2(&f);
        if fnorm > 0.0 {
            let r: Vec<f64> = self.stiffness.matvec(&u).iter().zip(&f).map(|(a, b)| a - b).collect();
            let rel = norm2(&r) / fnorm;
            if !(rel <= 1e-10) {
                return Err(Error::SolverBreakdown { context: "fine reference solve".into(), residual: rel });
            }
        }
        Ok(self.free.extend(&u, self.num_dofs))
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quadratic_form(&self.free.restrict(v)).max(0.0).sqrt()
    }

    pub fn h1_seminorm(&self, v: &[f64]) -> f64 {
        self.gradient.quadratic_form(&self.free.restrict(v)).max(0.0).sqrt()
    }

    pub fn energy_norm(&self, v: &[f64]) -> f64 {
        self.stiffness.quadratic_form(&self.free.restrict(v)).max(0.0).sqrt()
    }
}

/// Fine reference solution `u_h` on all DOFs.
pub fn solve_reference(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    rhs: &RhsField,
) -> Result<Vec<f64>> {
    FineOperators::assemble(mesh, field)?.solve(&load_vector(mesh, rhs))
}

/// Coarse Q1 Galerkin solution, computed with exact sub-cell integration of
/// the coefficients and returned interpolated on the fine nodes.
pub fn solve_coarse_fem(
    mesh: &MeshHierarchy,
    field: &CoefficientField,
    rhs: &RhsField,
) -> Result<Vec<f64>> {
    field.check_resolution(mesh)?;
    let nc = mesh.n_coarse();
    let r = mesh.refinement_ratio();
    let reference = ReferenceElement::for_mesh(mesh);
    let n_cnodes = (nc + 1) * (nc + 1);
    let cnode = |ix: usize, iy: usize| iy * (nc + 1) + ix;
    let boundary = |node: usize| {
        let (ix, iy) = (node % (nc + 1), node / (nc + 1));
        ix == 0 || iy == 0 || ix == nc || iy == nc
    };
    let mut index = vec![None; DIM * n_cnodes];
    let mut n_free = 0;
    for comp in 0..DIM {
        for node in 0..n_cnodes {
            if !boundary(node) {
                index[comp * n_cnodes + node] = Some(n_free);
                n_free += 1;
            }
        }
    }
    if n_free == 0 {
        return Ok(vec![0.0; mesh.num_dofs()]);
    }

    // interpolation weights of the coarse shape functions at the fine nodes of
    // each sub-cell, indexed [sub-cell][fine node][coarse node]
    let sub_weights: Vec<[[f64; CELL_NODES]; CELL_NODES]> = (0..r * r)
        .map(|s| {
            let (sx, sy) = (s % r, s / r);
            std::array::from_fn(|af| {
                let xi = (sx + af % 2) as f64 / r as f64;
                let eta = (sy + af / 2) as f64 / r as f64;
                shape(xi, eta)
            })
        })
        .collect();

    let mut triplets = Vec::new();
    let mut b = vec![0.0; n_free];
    for cy in 0..nc {
        for cx in 0..nc {
            let mut kc = [[0.0; ELEM_DOFS]; ELEM_DOFS];
            let mut fc = [0.0; ELEM_DOFS];
            for (s, w) in sub_weights.iter().enumerate() {
                let fine = mesh.fine_cell_id(cx * r + s % r, cy * r + s / r);
                let (lambda, mu) = field.lame_on_fine_cell(mesh, fine);
                let kf = reference.stiffness(lambda, mu);
                let ff = if rhs.is_zero() { [0.0; ELEM_DOFS] } else { element_load(mesh, rhs, fine) };
                // R maps coarse element DOF (k, ac) to fine element DOF (k, af)
                let rmap = |ef: usize, ec: usize| {
                    if ef / CELL_NODES == ec / CELL_NODES {
                        w[ef % CELL_NODES][ec % CELL_NODES]
                    } else {
                        0.0
                    }
                };
                let mut kr = [[0.0; ELEM_DOFS]; ELEM_DOFS];
                for i in 0..ELEM_DOFS {
                    for j in 0..ELEM_DOFS {
                        kr[i][j] = (0..ELEM_DOFS).map(|t| kf[i][t] * rmap(t, j)).sum();
                    }
                }
                for i in 0..ELEM_DOFS {
                    for j in 0..ELEM_DOFS {
                        kc[i][j] += (0..ELEM_DOFS).map(|t| rmap(t, i) * kr[t][j]).sum::<f64>();
                    }
                    fc[i] += (0..ELEM_DOFS).map(|t| rmap(t, i) * ff[t]).sum::<f64>();
                }
            }
            let nodes = [cnode(cx, cy), cnode(cx + 1, cy), cnode(cx, cy + 1), cnode(cx + 1, cy + 1)];
            let rows: [Option<usize>; ELEM_DOFS] =
                std::array::from_fn(|e| index[(e / CELL_NODES) * n_cnodes + nodes[e % CELL_NODES]]);
            for i in 0..ELEM_DOFS {
                let Some(ri) = rows[i] else { continue };
                b[ri] += fc[i];
                for j in 0..ELEM_DOFS {
                    if let Some(rj) = rows[j] {
                        triplets.push((ri, rj, kc[i][j]));
                    }
                }
            }
        }
    }
    let k = SparseSymMatrix::from_triplets(n_free, &triplets)?;
    let u_c = k.cholesky("coarse FEM stiffness")?.solve(&b);

    let coarse_value = |comp: usize, node: usize| index[comp * n_cnodes + node].map_or(0.0, |i| u_c[i]);
    let mut u = vec![0.0; mesh.num_dofs()];
    for node in 0..mesh.num_nodes() {
        let [ix, iy] = mesh.node_ij(node);
        let (cx, cy) = ((ix / r).min(nc - 1), (iy / r).min(nc - 1));
        let xi = (ix - cx * r) as f64 / r as f64;
        let eta = (iy - cy * r) as f64 / r as f64;
        let n = shape(xi, eta);
        let nodes = [cnode(cx, cy), cnode(cx + 1, cy), cnode(cx, cy + 1), cnode(cx + 1, cy + 1)];
        for comp in 0..DIM {
            u[mesh.dof(node, comp)] = (0..CELL_NODES).map(|a| n[a] * coarse_value(comp, nodes[a])).sum();
        }
    }
    Ok(u)
}

/// Writes `x,y,u1,u2` for every fine node.
pub fn write_solution_csv(mesh: &MeshHierarchy, u: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,y,u1,u2")?;
    for node in 0..mesh.num_nodes() {
        let [x, y] = mesh.node_coords(node);
        writeln!(
            out,
            "{x:.17e},{y:.17e},{:.17e},{:.17e}",
            u[mesh.dof(node, 0)],
            u[mesh.dof(node, 1)]
        )?;
    }
    Ok(())
}
