//! Nested Cartesian fine/coarse meshes and oversampling patches.
//!
//! Nodes and cells are numbered lexicographically (x fastest). Vector degrees
//! of freedom are component-major: all x-components first, then all
//! y-components, both globally and inside a patch.

use crate::error::{Error, Result};

/// Spatial dimension. Index formulas are written in terms of it, but only the
/// planar case is implemented.
pub const DIM: usize = 2;

/// Number of nodes of a Q1 cell.
pub const CELL_NODES: usize = 1 << DIM;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl Domain {
    pub fn unit() -> Self {
        Self {
            lower: [0.0; DIM],
            upper: [1.0; DIM],
        }
    }

    pub fn new(lower: [f64; DIM], upper: [f64; DIM]) -> Result<Self> {
        if (0..DIM).any(|a| !(upper[a] > lower[a]) || !lower[a].is_finite() || !upper[a].is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "degenerate domain {lower:?} .. {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..DIM).map(|a| self.width(a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: [f64; DIM]) -> bool {
        (0..DIM).all(|a| p[a] >= self.lower[a] && p[a] <= self.upper[a])
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self::unit()
    }
}

/// A coarse Cartesian mesh `T_H` and its uniform refinement `T_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshHierarchy {
    domain: Domain,
    n_coarse: usize,
    refinement_ratio: usize,
    n_fine: usize,
}

impl MeshHierarchy {
    /// Unit-square hierarchy with `n_coarse` coarse cells per direction, each
    /// split into `refinement_ratio` fine cells per direction.
    pub fn new(n_coarse: usize, refinement_ratio: usize) -> Result<Self> {
        Self::with_domain(n_coarse, refinement_ratio, Domain::unit())
    }

    pub fn with_domain(n_coarse: usize, refinement_ratio: usize, domain: Domain) -> Result<Self> {
        if n_coarse == 0 {
            return Err(Error::InvalidMesh("n_coarse must be positive".into()));
        }
        if refinement_ratio == 0 {
            return Err(Error::InvalidMesh("refinement_ratio must be positive".into()));
        }
        Ok(Self {
            domain,
            n_coarse,
            refinement_ratio,
            n_fine: n_coarse * refinement_ratio,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn refinement_ratio(&self) -> usize {
        self.refinement_ratio
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    /// Coarse mesh size per axis.
    pub fn coarse_h(&self) -> [f64; DIM] {
        std::array::from_fn(|a| self.domain.width(a) / self.n_coarse as f64)
    }

    /// Fine mesh size per axis.
    pub fn fine_h(&self) -> [f64; DIM] {
        std::array::from_fn(|a| self.domain.width(a) / self.n_fine as f64)
    }

    /// `H`, taken along the first axis.
    pub fn coarse_size(&self) -> f64 {
        self.coarse_h()[0]
    }

    /// `h`, taken along the first axis.
    pub fn fine_size(&self) -> f64 {
        self.fine_h()[0]
    }

    pub fn coarse_cell_volume(&self) -> f64 {
        self.coarse_h().iter().product()
    }

    pub fn fine_cell_volume(&self) -> f64 {
        self.fine_h().iter().product()
    }

    pub fn num_coarse_cells(&self) -> usize {
        self.n_coarse.pow(DIM as u32)
    }

    pub fn num_fine_cells(&self) -> usize {
        self.n_fine.pow(DIM as u32)
    }

    pub fn num_nodes(&self) -> usize {
        (self.n_fine + 1).pow(DIM as u32)
    }

    pub fn num_dofs(&self) -> usize {
        DIM * self.num_nodes()
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * (self.n_fine + 1) + ix
    }

    pub fn node_ij(&self, node: usize) -> [usize; DIM] {
        let n = self.n_fine + 1;
        [node % n, node / n]
    }

    pub fn node_coords(&self, node: usize) -> [f64; DIM] {
        let ij = self.node_ij(node);
        let h = self.fine_h();
        std::array::from_fn(|a| self.domain.lower[a] + ij[a] as f64 * h[a])
    }

    /// Global vector DOF of `(node, component)`.
    pub fn dof(&self, node: usize, component: usize) -> usize {
        component * self.num_nodes() + node
    }

    /// Inverse of [`Self::dof`].
    pub fn dof_node(&self, dof: usize) -> (usize, usize) {
        (dof % self.num_nodes(), dof / self.num_nodes())
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let ij = self.node_ij(node);
        ij.iter().any(|&i| i == 0 || i == self.n_fine)
    }

    pub fn coarse_cell_id(&self, cx: usize, cy: usize) -> usize {
        cy * self.n_coarse + cx
    }

    pub fn coarse_cell_ij(&self, cell: usize) -> [usize; DIM] {
        [cell % self.n_coarse, cell / self.n_coarse]
    }

    pub fn fine_cell_id(&self, fx: usize, fy: usize) -> usize {
        fy * self.n_fine + fx
    }

    pub fn fine_cell_ij(&self, cell: usize) -> [usize; DIM] {
        [cell % self.n_fine, cell / self.n_fine]
    }

    /// Nodes of a fine cell in the order (0,0), (1,0), (0,1), (1,1).
    pub fn fine_cell_nodes(&self, cell: usize) -> [usize; CELL_NODES] {
        let [fx, fy] = self.fine_cell_ij(cell);
        [
            self.node_id(fx, fy),
            self.node_id(fx + 1, fy),
            self.node_id(fx, fy + 1),
            self.node_id(fx + 1, fy + 1),
        ]
    }

    /// Lower-left corner of a fine cell.
    pub fn fine_cell_origin(&self, cell: usize) -> [f64; DIM] {
        let ij = self.fine_cell_ij(cell);
        let h = self.fine_h();
        std::array::from_fn(|a| self.domain.lower[a] + ij[a] as f64 * h[a])
    }

    pub fn fine_cell_center(&self, cell: usize) -> [f64; DIM] {
        let o = self.fine_cell_origin(cell);
        let h = self.fine_h();
        std::array::from_fn(|a| o[a] + 0.5 * h[a])
    }

    pub fn coarse_of_fine(&self, cell: usize) -> usize {
        let [fx, fy] = self.fine_cell_ij(cell);
        self.coarse_cell_id(fx / self.refinement_ratio, fy / self.refinement_ratio)
    }

    /// Fine cells partitioning a coarse cell, lexicographic.
    pub fn fine_cells_of_coarse(&self, cell: usize) -> Vec<usize> {
        let [cx, cy] = self.coarse_cell_ij(cell);
        let r = self.refinement_ratio;
        let mut out = Vec::with_capacity(r * r);
        for fy in cy * r..(cy + 1) * r {
            for fx in cx * r..(cx + 1) * r {
                out.push(self.fine_cell_id(fx, fy));
            }
        }
        out
    }

    /// Coarse cells within Chebyshev distance `m` of `cell`, as an inclusive
    /// index box clipped to the domain.
    pub fn coarse_neighborhood(&self, cell: usize, m: usize) -> ([usize; DIM], [usize; DIM]) {
        let c = self.coarse_cell_ij(cell);
        let lo = std::array::from_fn(|a| c[a].saturating_sub(m));
        let hi = std::array::from_fn(|a| (c[a] + m).min(self.n_coarse - 1));
        (lo, hi)
    }
}

/// Classification of a patch node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Strictly inside the patch; carries free DOFs.
    Interior,
    /// On `Σ_ω = ∂ω \ ∂Ω`.
    Interface,
    /// On the global boundary `∂Ω`.
    Dirichlet,
}

/// The `m`-th order oversampling patch `ω_T^(m)` of a coarse cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    center: usize,
    order: usize,
    cell_lo: [usize; DIM],
    cell_hi: [usize; DIM],
    coarse_cells: Vec<usize>,
    fine_cells: Vec<usize>,
    node_lo: [usize; DIM],
    node_dims: [usize; DIM],
    nodes: Vec<usize>,
    kinds: Vec<NodeKind>,
    interior_dofs: Vec<usize>,
    interior_global_dofs: Vec<usize>,
    dof_to_interior: Vec<Option<usize>>,
    boundary_nodes: Vec<usize>,
    refinement_ratio: usize,
    n_coarse: usize,
}

/// Builds `ω_T^(m)`: all coarse cells within Chebyshev distance `m` of `center`,
/// clipped at `∂Ω`.
pub fn build_patch(mesh: &MeshHierarchy, center: usize, m: usize) -> Result<Patch> {
    if center >= mesh.num_coarse_cells() {
        return Err(Error::InvalidInput(format!(
            "coarse cell {center} out of range ({} cells)",
            mesh.num_coarse_cells()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput("patch order m must be at least 1".into()));
    }
    let (cell_lo, cell_hi) = mesh.coarse_neighborhood(center, m);
    let r = mesh.refinement_ratio();

    let mut coarse_cells = Vec::new();
    for cy in cell_lo[1]..=cell_hi[1] {
        for cx in cell_lo[0]..=cell_hi[0] {
            coarse_cells.push(mesh.coarse_cell_id(cx, cy));
        }
    }

    let node_lo: [usize; DIM] = std::array::from_fn(|a| cell_lo[a] * r);
    let node_hi: [usize; DIM] = std::array::from_fn(|a| (cell_hi[a] + 1) * r);
    let node_dims: [usize; DIM] = std::array::from_fn(|a| node_hi[a] - node_lo[a] + 1);

    let mut fine_cells = Vec::new();
    for fy in node_lo[1]..node_hi[1] {
        for fx in node_lo[0]..node_hi[0] {
            fine_cells.push(mesh.fine_cell_id(fx, fy));
        }
    }

    let mut nodes = Vec::with_capacity(node_dims[0] * node_dims[1]);
    let mut kinds = Vec::with_capacity(nodes.capacity());
    for iy in node_lo[1]..=node_hi[1] {
        for ix in node_lo[0]..=node_hi[0] {
            let g = mesh.node_id(ix, iy);
            nodes.push(g);
            let on_patch_boundary =
                ix == node_lo[0] || ix == node_hi[0] || iy == node_lo[1] || iy == node_hi[1];
            let kind = if mesh.is_boundary_node(g) {
                NodeKind::Dirichlet
            } else if on_patch_boundary {
                NodeKind::Interface
            } else {
                NodeKind::Interior
            };
            kinds.push(kind);
        }
    }

    let n_nodes = nodes.len();
    let mut interior_dofs = Vec::new();
    let mut interior_global_dofs = Vec::new();
    let mut dof_to_interior = vec![None; DIM * n_nodes];
    for comp in 0..DIM {
        for (l, kind) in kinds.iter().enumerate() {
            if *kind == NodeKind::Interior {
                let ldof = comp * n_nodes + l;
                dof_to_interior[ldof] = Some(interior_dofs.len());
                interior_dofs.push(ldof);
                interior_global_dofs.push(mesh.dof(nodes[l], comp));
            }
        }
    }
    let boundary_nodes = kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == NodeKind::Interface)
        .map(|(l, _)| l)
        .collect();

    Ok(Patch {
        center,
        order: m,
        cell_lo,
        cell_hi,
        coarse_cells,
        fine_cells,
        node_lo,
        node_dims,
        nodes,
        kinds,
        interior_dofs,
        interior_global_dofs,
        dof_to_interior,
        boundary_nodes,
        refinement_ratio: r,
        n_coarse: mesh.n_coarse(),
    })
}

impl Patch {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Inclusive coarse index box `(lo, hi)`.
    pub fn cell_box(&self) -> ([usize; DIM], [usize; DIM]) {
        (self.cell_lo, self.cell_hi)
    }

    /// Contained coarse cells, lexicographic. Position in this list is the
    /// patch-local coarse index `q`.
    pub fn coarse_cells(&self) -> &[usize] {
        &self.coarse_cells
    }

    /// `n_e`.
    pub fn num_coarse_cells(&self) -> usize {
        self.coarse_cells.len()
    }

    pub fn coarse_local_index(&self, cell: usize) -> Option<usize> {
        let cx = cell % self.n_coarse;
        let cy = cell / self.n_coarse;
        if cy >= self.n_coarse
            || cx < self.cell_lo[0]
            || cx > self.cell_hi[0]
            || cy < self.cell_lo[1]
            || cy > self.cell_hi[1]
        {
            return None;
        }
        let w = self.cell_hi[0] - self.cell_lo[0] + 1;
        Some((cy - self.cell_lo[1]) * w + (cx - self.cell_lo[0]))
    }

    /// Patch-local coarse index of the fine cell's parent.
    pub fn coarse_local_of_fine(&self, mesh: &MeshHierarchy, fine_cell: usize) -> usize {
        self.coarse_local_index(mesh.coarse_of_fine(fine_cell))
            .expect("fine cell outside patch")
    }

    pub fn fine_cells(&self) -> &[usize] {
        &self.fine_cells
    }

    pub fn num_local_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// All patch vector DOFs (including those on `∂ω`).
    pub fn num_local_dofs(&self) -> usize {
        DIM * self.nodes.len()
    }

    pub fn global_node(&self, local: usize) -> usize {
        self.nodes[local]
    }

    pub fn node_kind(&self, local: usize) -> NodeKind {
        self.kinds[local]
    }

    pub fn local_node_of_global(&self, mesh: &MeshHierarchy, node: usize) -> Option<usize> {
        let [ix, iy] = mesh.node_ij(node);
        let (lx, ly) = (ix.checked_sub(self.node_lo[0])?, iy.checked_sub(self.node_lo[1])?);
        (lx < self.node_dims[0] && ly < self.node_dims[1]).then(|| ly * self.node_dims[0] + lx)
    }

    pub fn local_dof(&self, local_node: usize, component: usize) -> usize {
        component * self.nodes.len() + local_node
    }

    pub fn global_dof_of_local(&self, mesh: &MeshHierarchy, local_dof: usize) -> usize {
        let n = self.nodes.len();
        mesh.dof(self.nodes[local_dof % n], local_dof / n)
    }

    /// Local nodes of a fine cell in the patch, same order as
    /// [`MeshHierarchy::fine_cell_nodes`].
    pub fn local_cell_nodes(&self, mesh: &MeshHierarchy, fine_cell: usize) -> [usize; CELL_NODES] {
        let [fx, fy] = mesh.fine_cell_ij(fine_cell);
        let lx = fx - self.node_lo[0];
        let ly = fy - self.node_lo[1];
        let w = self.node_dims[0];
        [
            ly * w + lx,
            ly * w + lx + 1,
            (ly + 1) * w + lx,
            (ly + 1) * w + lx + 1,
        ]
    }

    /// Local DOF indices of the free (zero-trace on `∂ω`) DOFs, component-major.
    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    /// Global DOF ids matching [`Self::interior_dofs`].
    pub fn interior_global_dofs(&self) -> &[usize] {
        &self.interior_global_dofs
    }

    pub fn num_interior_dofs(&self) -> usize {
        self.interior_dofs.len()
    }

    /// Position of a local DOF among the interior DOFs.
    pub fn interior_index(&self, local_dof: usize) -> Option<usize> {
        self.dof_to_interior[local_dof]
    }

    /// `I_Σω`: local nodes on `∂ω \ ∂Ω`, lexicographic. `n_b` is its length.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Local DOFs of `I_Σω` ordered `s * n_b + p`.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..DIM)
            .flat_map(|s| self.boundary_nodes.iter().map(move |&p| self.local_dof(p, s)))
            .collect()
    }

    /// Whether the patch is the whole domain, in which case `Σ_ω` is empty.
    pub fn covers_domain(&self) -> bool {
        self.cell_lo.iter().all(|&c| c == 0) && self.cell_hi.iter().all(|&c| c == self.n_coarse - 1)
    }

    /// Whether the two patches share at least one coarse cell.
    pub fn overlaps(&self, other: &Patch) -> bool {
        (0..DIM).all(|a| self.cell_lo[a] <= other.cell_hi[a] && other.cell_lo[a] <= self.cell_hi[a])
    }

    /// Fine-cell refinement ratio of the underlying hierarchy.
    pub fn refinement_ratio(&self) -> usize {
        self.refinement_ratio
    }
}

/// For every coarse cell, the centers of the order-`m` patches containing it.
pub fn patch_cover_index(mesh: &MeshHierarchy, m: usize) -> Vec<Vec<usize>> {
    (0..mesh.num_coarse_cells())
        .map(|cell| {
            // Chebyshev balls are symmetric: T' covers T iff T covers T'.
            let (lo, hi) = mesh.coarse_neighborhood(cell, m);
            let mut centers = Vec::new();
            for cy in lo[1]..=hi[1] {
                for cx in lo[0]..=hi[0] {
                    centers.push(mesh.coarse_cell_id(cx, cy));
                }
            }
            centers
        })
        .collect()
}
