//! Lamé coefficient fields and right-hand sides.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{Domain, MeshHierarchy, DIM};

/// How a [`CoefficientField`] was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Constant { lambda: f64, mu: f64 },
    /// λ and μ drawn independently from `U[low, high]` per η-cell.
    Random { low: f64, high: f64, seed: u64 },
}

/// Piecewise-constant λ, μ on a uniform grid of `eta_cells × eta_cells` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    domain: Domain,
    eta_cells: usize,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    kind: FieldKind,
}

/// Spatially constant field.
pub fn constant_field(lambda: f64, mu: f64) -> Result<CoefficientField> {
    if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(Error::InvalidField(format!(
            "Lamé parameters must be positive, got lambda={lambda}, mu={mu}"
        )));
    }
    Ok(CoefficientField {
        domain: Domain::unit(),
        eta_cells: 1,
        lambda: vec![lambda],
        mu: vec![mu],
        kind: FieldKind::Constant { lambda, mu },
    })
}

/// Random field on an `eta_cells`-per-direction grid.
///
/// The generator is ChaCha8 (counter-based). λ is drawn from the stream
/// seeded with `seed`, μ from the stream seeded with `seed + 1`; cells are
/// visited lexicographically (x fastest).
pub fn random_field(eta_cells: usize, low: f64, high: f64, seed: u64) -> Result<CoefficientField> {
    if eta_cells == 0 {
        return Err(Error::InvalidField("eta_cells must be positive".into()));
    }
    if !(low > 0.0 && high > low && high.is_finite()) {
        return Err(Error::InvalidField(format!(
            "need 0 < low < high, got [{low}, {high}]"
        )));
    }
    let dist = Uniform::new_inclusive(low, high)
        .map_err(|e| Error::InvalidField(format!("uniform range: {e}")))?;
    let n = eta_cells * eta_cells;
    let mut lambda_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let lambda = (0..n).map(|_| dist.sample(&mut lambda_rng)).collect();
    let mu = (0..n).map(|_| dist.sample(&mut mu_rng)).collect();
    Ok(CoefficientField {
        domain: Domain::unit(),
        eta_cells,
        lambda,
        mu,
        kind: FieldKind::Random { low, high, seed },
    })
}

impl CoefficientField {
    /// Re-anchors the η-grid on another domain box.
    pub fn on_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn eta_cells(&self) -> usize {
        self.eta_cells
    }

    /// Characteristic length η (along the first axis).
    pub fn eta(&self) -> f64 {
        self.domain.width(0) / self.eta_cells as f64
    }

    pub fn lambda_values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FieldKind::Constant { .. })
    }

    /// η-cell index containing `p`. Points on an η-cell face belong to the
    /// cell with the larger index.
    pub fn cell_index(&self, p: [f64; DIM]) -> Result<usize> {
        if !self.domain.contains(p) {
            return Err(Error::OutsideDomain { x: p[0], y: p[1] });
        }
        let ij: [usize; DIM] = std::array::from_fn(|a| {
            let t = (p[a] - self.domain.lower[a]) / self.domain.width(a) * self.eta_cells as f64;
            (t.floor() as usize).min(self.eta_cells - 1)
        });
        Ok(ij[1] * self.eta_cells + ij[0])
    }

    /// `(λ, μ)` at a point.
    pub fn eval_lame(&self, p: [f64; DIM]) -> Result<(f64, f64)> {
        let c = self.cell_index(p)?;
        Ok((self.lambda[c], self.mu[c]))
    }

    /// `(λ, μ)` on a fine cell, read at its center.
    pub fn lame_on_fine_cell(&self, mesh: &MeshHierarchy, cell: usize) -> (f64, f64) {
        let c = self
            .cell_index(mesh.fine_cell_center(cell))
            .expect("fine cell center inside the domain");
        (self.lambda[c], self.mu[c])
    }

    /// Ellipticity constants `(α, β)` with `2α ξ:ξ ≤ (A:ξ):ξ ≤ β ξ:ξ` for
    /// symmetric ξ, for the isotropic tensor `A:ξ = 2μ ξ + λ tr(ξ) I`.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        let mu_min = self.mu.iter().copied().fold(f64::INFINITY, f64::min);
        let beta = self
            .lambda
            .iter()
            .zip(&self.mu)
            .map(|(l, m)| 2.0 * m + DIM as f64 * l)
            .fold(0.0, f64::max);
        (mu_min, beta)
    }

    /// Rejects meshes whose fine cells straddle η-cell faces.
    pub fn check_resolution(&self, mesh: &MeshHierarchy) -> Result<()> {
        if self.domain != *mesh.domain() {
            return Err(Error::Resolution("field and mesh domains differ".into()));
        }
        if self.is_constant() {
            return Ok(());
        }
        if mesh.n_fine() % self.eta_cells != 0 {
            return Err(Error::Resolution(format!(
                "h = 1/{} is not a divisor of eta = 1/{}",
                mesh.n_fine(),
                self.eta_cells
            )));
        }
        Ok(())
    }

    /// Short stable description used in result tables and cache keys.
    pub fn descriptor(&self) -> String {
        match self.kind {
            FieldKind::Constant { lambda, mu } => format!("constant(lambda={lambda},mu={mu})"),
            FieldKind::Random { low, high, seed } => {
                format!("random(eta_cells={},low={low},high={high},seed={seed})", self.eta_cells)
            }
        }
    }

    /// Writes λ (`mu = false`) or μ as a CSV grid, one η-row per line,
    /// bottom row first.
    pub fn write_grid(&self, path: &Path, mu: bool) -> Result<()> {
        let values = if mu { &self.mu } else { &self.lambda };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in values.chunks(self.eta_cells) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Body force `f`.
#[derive(Clone)]
pub enum RhsField {
    Constant([f64; DIM]),
    /// The smooth trigonometric load
    /// `f_1 = π²[4 sin(2πy)(2cos(2πx) − 1) − cos(π(x+y))]`, `f_2` with x and y swapped.
    Smooth,
    Custom {
        name: String,
        f: Arc<dyn Fn([f64; DIM]) -> [f64; DIM] + Send + Sync>,
    },
}

impl fmt::Debug for RhsField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Self::Smooth => write!(f, "Smooth"),
            Self::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl RhsField {
    pub fn eval(&self, p: [f64; DIM]) -> [f64; DIM] {
        match self {
            Self::Constant(v) => *v,
            Self::Smooth => {
                let [x, y] = p;
                let tail = (PI * (x + y)).cos();
                let pi2 = PI * PI;
                [
                    pi2 * (4.0 * (2.0 * PI * y).sin() * (-1.0 + 2.0 * (2.0 * PI * x).cos()) - tail),
                    pi2 * (4.0 * (2.0 * PI * x).sin() * (-1.0 + 2.0 * (2.0 * PI * y).cos()) - tail),
                ]
            }
            Self::Custom { f, .. } => f(p),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(v) if v.iter().all(|&c| c == 0.0))
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::Constant(v) => format!("constant({},{})", v[0], v[1]),
            Self::Smooth => "smooth".into(),
            Self::Custom { name, .. } => format!("custom({name})"),
        }
    }
}
