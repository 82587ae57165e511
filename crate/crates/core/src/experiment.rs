//! Convergence sweeps driven by a small `key = value` configuration file.
//!
//! ```text
//! methods = fem, lod, slod
//! n_coarse = 4, 8, 16
//! refinement_ratio = 4       # fine cells per coarse cell at the finest H
//! oversampling = 1, 2, 3
//! stability_tolerance = 0.5
//! field = random             # or constant
//! eta_cells = 16
//! range = 1, 100
//! seed = 1
//! rhs = constant             # or smooth
//! rhs_value = 1, 1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coarse::{
    companion_gram_diagnostic, compute_errors, estimate_condition_number, run_method, Errors,
    Method, MethodRun,
};
use crate::coeff::{constant_field, random_field, CoefficientField, FieldKind, RhsField};
use crate::error::{Error, Result};
use crate::fem::{load_vector, FineOperators};
use crate::mesh::{MeshHierarchy, DIM};
use crate::slod::DEFAULT_STABILITY_TOLERANCE;

/// Smallest admissible number of fine cells per coarse cell and direction.
pub const MIN_REFINEMENT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant { lambda: f64, mu: f64 },
    Random { eta_cells: usize, low: f64, high: f64, seed: u64 },
}

impl FieldSpec {
    pub fn build(&self) -> Result<CoefficientField> {
        match *self {
            Self::Constant { lambda, mu } => constant_field(lambda, mu),
            Self::Random { eta_cells, low, high, seed } => random_field(eta_cells, low, high, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub gram: bool,
    pub kappa: bool,
}

impl Diagnostics {
    pub fn parse(list: &str) -> Result<Self> {
        let mut d = Self::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "gram" => d.gram = true,
                "kappa" => d.kappa = true,
                "none" => {}
                other => {
                    return Err(Error::Config {
                        key: "diagnostics".into(),
                        message: format!("unknown diagnostic `{other}`"),
                    })
                }
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub n_coarse: Vec<usize>,
    /// Fine cells per coarse cell at the largest `n_coarse`.
    pub refinement_ratio: usize,
    pub oversampling: Vec<usize>,
    pub stability_tolerance: f64,
    pub field: FieldSpec,
    pub rhs: RhsField,
    pub threads: Option<usize>,
    pub diagnostics: Diagnostics,
    pub dump_bases: bool,
    pub output: PathBuf,
    /// Directory for cached reference solutions.
    pub cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Fem, Method::Lod, Method::Slod],
            n_coarse: vec![4, 8, 16],
            refinement_ratio: 4,
            oversampling: vec![2],
            stability_tolerance: DEFAULT_STABILITY_TOLERANCE,
            field: FieldSpec::Constant { lambda: 1.0, mu: 1.0 },
            rhs: RhsField::Constant([1.0, 1.0]),
            threads: None,
            diagnostics: Diagnostics::default(),
            dump_bases: false,
            output: PathBuf::from("results"),
            cache: None,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| config_err(key, format!("cannot parse `{s}`"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(config_err(key, format!("expected a boolean, got `{other}`"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err("line", format!("line {}: expected `key = value`", lineno + 1))
            })?;
            if entries.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(config_err(key.trim(), "given more than once"));
            }
        }

        let mut cfg = Self::default();
        let mut field_kind = "constant".to_string();
        let (mut lambda, mut mu) = (1.0, 1.0);
        let mut eta_cells = None;
        let mut range = (1.0, 100.0);
        let mut seed = 0u64;
        let mut rhs_kind = "constant".to_string();
        let mut rhs_value = [1.0, 1.0];
        for (key, value) in &entries {
            let k = key.as_str();
            match k {
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| config_err(k, format!("unknown method `{s}`"))))
                        .collect::<Result<_>>()?
                }
                "n_coarse" => cfg.n_coarse = parse_list(k, value)?,
                "refinement_ratio" => cfg.refinement_ratio = parse_one(k, value)?,
                "oversampling" => cfg.oversampling = parse_list(k, value)?,
                "stability_tolerance" => cfg.stability_tolerance = parse_one(k, value)?,
                "field" => field_kind = value.clone(),
                "lambda" => lambda = parse_one(k, value)?,
                "mu" => mu = parse_one(k, value)?,
                "eta_cells" => eta_cells = Some(parse_one(k, value)?),
                "range" => {
                    let v: Vec<f64> = parse_list(k, value)?;
                    if v.len() != 2 {
                        return Err(config_err(k, "expected `low, high`"));
                    }
                    range = (v[0], v[1]);
                }
                "seed" => seed = parse_one(k, value)?,
                "rhs" => rhs_kind = value.clone(),
                "rhs_value" => {
                    let v: Vec<f64> = parse_list(k, value)?;
                    if v.len() != DIM {
                        return Err(config_err(k, "expected two components"));
                    }
                    rhs_value = [v[0], v[1]];
                }
                "threads" => cfg.threads = Some(parse_one(k, value)?),
                "diagnostics" => cfg.diagnostics = Diagnostics::parse(value)?,
                "dump_bases" => cfg.dump_bases = parse_bool(k, value)?,
                "output" => cfg.output = PathBuf::from(value),
                "cache" => cfg.cache = Some(PathBuf::from(value)),
                _ => return Err(config_err(k, "unknown key")),
            }
        }
        cfg.field = match field_kind.as_str() {
            "constant" => FieldSpec::Constant { lambda, mu },
            "random" => FieldSpec::Random {
                eta_cells: eta_cells.ok_or_else(|| config_err("eta_cells", "required for a random field"))?,
                low: range.0,
                high: range.1,
                seed,
            },
            other => return Err(config_err("field", format!("unknown field `{other}`"))),
        };
        cfg.rhs = match rhs_kind.as_str() {
            "constant" => RhsField::Constant(rhs_value),
            "smooth" => RhsField::Smooth,
            other => return Err(config_err("rhs", format!("unknown rhs `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fine cells per direction of the common reference mesh.
    pub fn n_fine(&self) -> usize {
        self.n_coarse.iter().copied().max().unwrap_or(0) * self.refinement_ratio
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(config_err("methods", "no method given"));
        }
        if self.n_coarse.is_empty() || self.n_coarse.contains(&0) {
            return Err(config_err("n_coarse", "need positive coarse mesh sizes"));
        }
        if self.refinement_ratio == 0 {
            return Err(config_err("refinement_ratio", "must be positive"));
        }
        if self.methods.iter().any(|m| m.uses_patches())
            && (self.oversampling.is_empty() || self.oversampling.contains(&0))
        {
            return Err(config_err("oversampling", "need positive patch orders"));
        }
        if !(self.stability_tolerance >= 0.0) {
            return Err(config_err("stability_tolerance", "must be non-negative"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads", "must be positive"));
        }
        let n_fine = self.n_fine();
        for &nc in &self.n_coarse {
            if n_fine % nc != 0 {
                return Err(config_err(
                    "refinement_ratio",
                    format!("h = 1/{n_fine} does not divide H = 1/{nc}"),
                ));
            }
            if n_fine / nc < MIN_REFINEMENT {
                return Err(config_err(
                    "refinement_ratio",
                    format!("H/h = {} at H = 1/{nc}, need at least {MIN_REFINEMENT}", n_fine / nc),
                ));
            }
        }
        if let FieldSpec::Random { eta_cells, .. } = self.field {
            if eta_cells == 0 || n_fine % eta_cells != 0 {
                return Err(config_err(
                    "refinement_ratio",
                    format!("h = 1/{n_fine} does not resolve eta = 1/{eta_cells}"),
                ));
            }
        }
        self.field.build()?;
        Ok(())
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub m: Option<usize>,
    pub stability_tolerance: Option<f64>,
    pub field_kind: &'static str,
    pub seed: Option<u64>,
    pub errors: Errors,
    pub kappa: Option<f64>,
    pub max_residual_surrogate: Option<f64>,
    pub wall_time_basis: f64,
    pub wall_time_solve: f64,
}

impl ResultRow {
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }
}

pub const RESULTS_HEADER: &str = "method,H,h,m,delta_s,field_kind,seed,err_L2,err_H1semi,err_energy,kappa,max_residual_surrogate,wall_time_basis,wall_time_solve";

/// Columns holding timings, excluded from reproducibility comparisons.
pub const TIMING_COLUMNS: [&str; 2] = ["wall_time_basis", "wall_time_solve"];

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sci(v: f64) -> String {
    format!("{v:.12e}")
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
            self.method,
            1.0 / self.n_coarse as f64,
            1.0 / self.n_fine as f64,
            opt(self.m),
            opt(self.stability_tolerance),
            self.field_kind,
            opt(self.seed),
            sci(self.errors.l2),
            sci(self.errors.h1_semi),
            sci(self.errors.energy),
            self.kappa.map(sci).unwrap_or_default(),
            self.max_residual_surrogate.map(sci).unwrap_or_default(),
            self.wall_time_basis,
            self.wall_time_solve,
        )
    }
}

/// Smallest Gram eigenvalue per `(method, H, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramRow {
    pub method: Method,
    pub n_coarse: usize,
    pub m: usize,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub gram: Vec<GramRow>,
    /// Per-basis diagnostics, one CSV line each, when bases are dumped.
    pub basis_lines: Vec<String>,
    pub companion_lines: Vec<String>,
}

impl ExperimentReport {
    /// Rows for one method (and patch order) ordered by `H`, coarsest first.
    pub fn curve(&self, method: Method, m: Option<usize>) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && (method == Method::Fem || r.m == m))
            .collect()
    }
}

/// Least-squares slope of `log err` against `log H`.
pub fn fit_rate(hs: &[f64], errors: &[f64]) -> Result<f64> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(Error::InvalidInput("rate fit needs at least two (H, error) pairs".into()));
    }
    if hs.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("rate fit needs positive finite values".into()));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("rate fit needs distinct mesh sizes".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

fn cache_file(dir: &Path, n_fine: usize, field: &CoefficientField, rhs: &RhsField) -> PathBuf {
    let descriptor = format!("reference_h{n_fine}_{}_{}", field.descriptor(), rhs.descriptor());
    let name: String = descriptor
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    dir.join(format!("{name}.bin"))
}

fn read_cached(path: &Path, len: usize) -> Option<Vec<f64>> {
    let bytes = std::fs::read(path).ok()?;
    if bytes.len() != len * 8 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

fn write_cached(path: &Path, values: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

fn basis_dump(report: &mut ExperimentReport, method: Method, nc: usize, m: usize, run: &MethodRun) {
    for b in &run.bases {
        report.basis_lines.push(format!(
            "{method},{},{},{},{m},{},{},{},{},{},{}",
            1.0 / nc as f64,
            b.center,
            b.component,
            b.info.rank,
            b.info.rank_used,
            sci(b.info.residual_full),
            sci(b.info.residual_used),
            sci(b.info.deviation),
            sci(b.energy_norm),
        ));
        let n_e = b.patch_cells.len();
        for (idx, v) in b.coefficients.iter().enumerate() {
            report.companion_lines.push(format!(
                "{method},{},{m},{},{},{},{},{}",
                1.0 / nc as f64,
                b.center,
                b.component,
                b.patch_cells[idx % n_e],
                idx / n_e,
                sci(*v),
            ));
        }
    }
}

/// Runs the sweep `methods × H × m` against one fine reference solution.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let field = cfg.field.build()?;
    let n_fine = cfg.n_fine();
    let finest = MeshHierarchy::new(n_fine / cfg.refinement_ratio, cfg.refinement_ratio)?;
    let ops = FineOperators::assemble(&finest, &field)?;
    let reference = match cfg.cache.as_deref().map(|d| cache_file(d, n_fine, &field, &cfg.rhs)) {
        Some(path) => match read_cached(&path, finest.num_dofs()) {
            Some(u) => u,
            None => {
                let u = ops.solve(&load_vector(&finest, &cfg.rhs))?;
                write_cached(&path, &u)?;
                u
            }
        },
        None => ops.solve(&load_vector(&finest, &cfg.rhs))?,
    };

    let (field_kind, seed) = match field.kind() {
        FieldKind::Constant { .. } => ("constant", None),
        FieldKind::Random { seed, .. } => ("random", Some(*seed)),
    };
    let mut report = ExperimentReport::default();
    for &method in &cfg.methods {
        for &nc in &cfg.n_coarse {
            let mesh = MeshHierarchy::new(nc, n_fine / nc)?;
            let orders: Vec<Option<usize>> = if method.uses_patches() {
                cfg.oversampling.iter().map(|&m| Some(m)).collect()
            } else {
                vec![None]
            };
            for m in orders {
                let run = run_method(
                    &mesh,
                    &field,
                    &cfg.rhs,
                    method,
                    m.unwrap_or(1),
                    cfg.stability_tolerance,
                )?;
                let errors = compute_errors(&ops, &reference, &run.solution);
                let kappa = match (&run.matrix, cfg.diagnostics.kappa) {
                    (Some(a), true) => Some(estimate_condition_number(a)?.value),
                    _ => None,
                };
                if let (Some(m), true) = (m, cfg.diagnostics.gram) {
                    report.gram.push(GramRow {
                        method,
                        n_coarse: nc,
                        m,
                        lambda_min: companion_gram_diagnostic(&mesh, &run.bases)?,
                    });
                }
                if let (Some(m), true) = (m, cfg.dump_bases) {
                    basis_dump(&mut report, method, nc, m, &run);
                }
                report.rows.push(ResultRow {
                    method,
                    n_coarse: nc,
                    n_fine,
                    m,
                    stability_tolerance: (method == Method::Slod).then_some(cfg.stability_tolerance),
                    field_kind,
                    seed,
                    errors,
                    kappa,
                    max_residual_surrogate: if method == Method::Slod {
                        run.max_residual_surrogate()
                    } else {
                        None
                    },
                    wall_time_basis: run.wall_time_basis,
                    wall_time_solve: run.wall_time_solve,
                });
            }
        }
    }
    Ok(report)
}

/// Writes `results.csv`, the coefficient grids, one gnuplot table per curve
/// and, when present, the Gram and basis dumps into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    for row in &report.rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    std::fs::write(dir.join("results.csv"), csv)?;

    let field = cfg.field.build()?;
    field.write_grid(&dir.join("field_lambda.csv"), false)?;
    field.write_grid(&dir.join("field_mu.csv"), true)?;

    let mut curves: BTreeMap<String, String> = BTreeMap::new();
    for row in &report.rows {
        let name = match row.m {
            Some(m) => format!("{}_m{m}.dat", row.method),
            None => format!("{}.dat", row.method),
        };
        let body = curves
            .entry(name)
            .or_insert_with(|| "# H err_L2 err_H1semi err_energy\n".to_string());
        let _ = writeln!(
            body,
            "{} {} {} {}",
            row.coarse_h(),
            sci(row.errors.l2),
            sci(row.errors.h1_semi),
            sci(row.errors.energy)
        );
    }
    for (name, body) in curves {
        std::fs::write(dir.join(name), body)?;
    }

    if !report.gram.is_empty() {
        let mut s = String::from("method,H,m,lambda_min\n");
        for g in &report.gram {
            let _ = writeln!(s, "{},{},{},{}", g.method, 1.0 / g.n_coarse as f64, g.m, sci(g.lambda_min));
        }
        std::fs::write(dir.join("gram.csv"), s)?;
    }
    if cfg.dump_bases {
        let mut s = String::from("method,H,T,k,m,r,r_s,t_full,t_stabilized,deviation,energy_norm\n");
        for line in &report.basis_lines {
            s.push_str(line);
            s.push('\n');
        }
        std::fs::write(dir.join("bases.csv"), s)?;
        let mut s = String::from("method,H,m,T,k,cell,component,value\n");
        for line in &report.companion_lines {
            s.push_str(line);
            s.push('\n');
        }
        std::fs::write(dir.join("companions.csv"), s)?;
    }
    Ok(())
}

/// Drops the timing columns of a `results.csv` body.
pub fn strip_timing_columns(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return String::new() };
    let keep: Vec<bool> = header.split(',').map(|c| !TIMING_COLUMNS.contains(&c)).collect();
    std::iter::once(header)
        .chain(lines)
        .map(|line| {
            line.split(',')
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(c, _)| c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
