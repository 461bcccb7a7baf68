//! Scenario files: a strict JSON schema with a mandatory `version`, checked
//! in full so that every problem is reported at once.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use alpha_measure::envelope::SolveOptions;
use alpha_measure::grid::{ComplexGrid, Shape, DEFAULT_NODE_BUDGET};
use alpha_measure::measure::WeightHolder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::expr::Expr;
use crate::scenario::Scenario;

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} does not match the scenario schema: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{} validation error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    /// Every message, one per problem.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: GridConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub alpha: AlphaConfig,
    pub k: KConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub checks: CheckConfig,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// SHA-256 of the canonical form of the file (keys sorted, no spaces).
    #[serde(skip)]
    pub hash: String,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Measure]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Either `half_width` (a cube centred at the origin) or explicit
/// `extents` and `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub h: f64,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub extents: Option<Vec<usize>>,
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
    #[serde(default)]
    pub node_budget: Option<usize>,
}

impl GridConfig {
    pub fn budget(&self) -> usize {
        self.node_budget.unwrap_or(DEFAULT_NODE_BUDGET)
    }

    pub fn build(&self) -> alpha_measure::Result<Arc<ComplexGrid>> {
        match (&self.half_width, &self.extents, &self.origin) {
            (Some(w), _, _) => ComplexGrid::centered(self.n, *w, self.h, self.budget()),
            (None, Some(e), Some(o)) => ComplexGrid::with_budget(self.n, e, self.h, o, self.budget()),
            _ => Err(alpha_measure::Error::InvalidGrid("need half_width or extents with origin".into())),
        }
    }

    /// The grid at refinement level `j`: spacing `h / 2^j` over the same
    /// region.
    pub fn refined(&self, j: u32) -> GridConfig {
        let f = 1usize << j;
        let mut g = self.clone();
        g.h = self.h / f as f64;
        if let Some(e) = &self.extents {
            g.extents = Some(e.iter().map(|&e| (e - 1) * f + 1).collect());
        }
        g
    }

    fn node_count(&self) -> Option<usize> {
        let dim = 2 * self.n;
        match (&self.half_width, &self.extents) {
            (Some(w), _) => {
                let k = (w / self.h - 1e-9).ceil() as usize;
                (2 * k + 1).checked_pow(dim as u32)
            }
            (None, Some(e)) => e.iter().try_fold(1usize, |a, &b| a.checked_mul(b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub shape: Option<Shape>,
    /// Mask CSV; its interior nodes form the domain.
    #[serde(default)]
    pub mask_path: Option<PathBuf>,
    #[serde(default = "yes")]
    pub cut_cells: bool,
}

fn yes() -> bool {
    true
}

/// Exactly one of `effective`, `printed` or `csv_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    #[serde(default)]
    pub effective: Option<EffectiveCoeffs>,
    /// Form coefficients `c_jk` as `[re, im]` pairs, `n × n`.
    #[serde(default)]
    pub printed: Option<Vec<Vec<[f64; 2]>>>,
    /// Per-node alpha CSV.
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            effective: Some(EffectiveCoeffs::default()),
            printed: None,
            csv_path: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveCoeffs {
    #[serde(default = "one")]
    pub a11: f64,
    #[serde(default = "one")]
    pub a22: f64,
    #[serde(default)]
    pub a12_re: f64,
    #[serde(default)]
    pub a12_im: f64,
}

impl Default for EffectiveCoeffs {
    fn default() -> Self {
        EffectiveCoeffs {
            a11: 1.0,
            a22: 1.0,
            a12_re: 0.0,
            a12_im: 0.0,
        }
    }
}

/// Exactly one of `shapes`, `points`, `nodes` or `mask_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KConfig {
    #[serde(default)]
    pub shapes: Option<Vec<Shape>>,
    /// Coordinates snapped to their nearest nodes.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
    /// Mask CSV; its interior nodes form `K`.
    #[serde(default)]
    pub mask_path: Option<PathBuf>,
    #[serde(default = "default_k_label")]
    pub label: String,
}

fn default_k_label() -> String {
    "K".into()
}

/// At most one of `constant`, `expression` or `field_path`; none means
/// `ψ ≡ -1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub expression: Option<Expr>,
    /// Field CSV holding the extension on every node.
    #[serde(default)]
    pub field_path: Option<PathBuf>,
    #[serde(default)]
    pub holder: Option<WeightHolder>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// The measure of the configured weight.
    Measure,
    /// The unweighted measure of the same `K`.
    Unweighted,
    /// `-1 ≤ ω ≤ 0` (or `inf ψ ≤ ω ≤ 0`).
    Bounds,
    /// Residual off the contact set within ten times the solver tolerance.
    HarmonicResidual,
    /// Weighted field between `-inf ψ` and `-sup ψ` times the unweighted one.
    Connection,
    /// Envelope against the banded direct solve.
    Oracle,
    /// Seeded subsolution corpus on the node-snapped variant.
    TwoConstants,
    /// `C ρ ≤ ω ≤ 0` near the boundary.
    Barrier,
    /// Modulus sampling, fit and the near-`K` estimate.
    Holder,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Measure,
        Task::Unweighted,
        Task::Bounds,
        Task::HarmonicResidual,
        Task::Connection,
        Task::Oracle,
        Task::TwoConstants,
        Task::Barrier,
        Task::Holder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Measure => "measure",
            Task::Unweighted => "unweighted",
            Task::Bounds => "bounds",
            Task::HarmonicResidual => "harmonic_residual",
            Task::Connection => "connection",
            Task::Oracle => "oracle",
            Task::TwoConstants => "two_constants",
            Task::Barrier => "barrier",
            Task::Holder => "holder",
        }
    }

    pub fn dependencies(self) -> &'static [Task] {
        match self {
            Task::Measure | Task::Unweighted | Task::TwoConstants => &[],
            Task::Connection => &[Task::Measure, Task::Unweighted],
            _ => &[Task::Measure],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub oracle_tol: f64,
    pub two_constants_count: usize,
    pub two_constants_slack: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            oracle_tol: 1e-8,
            two_constants_count: 100,
            two_constants_slack: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearKConfig {
    pub c: f64,
    #[serde(default = "one")]
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderConfig {
    /// Region of the global fit; defaults to the domain shape when it is a
    /// ball, shrunk by two grid steps.
    pub region: Option<Shape>,
    /// Region of the collar fit; defaults to a shell of width `collar_width`
    /// around a ball `K`.
    pub collar_region: Option<Shape>,
    pub pair_budget: usize,
    /// In physical units; defaults to 8 grid steps.
    pub collar_width: Option<f64>,
    pub near_k: Option<NearKConfig>,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            region: None,
            collar_region: None,
            pair_budget: 4000,
            collar_width: None,
            near_k: None,
        }
    }
}

impl ScenarioConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The output directory, resolved against the config location.
    pub fn output(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Structural checks that need no grid.
    fn structural_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.version != SCHEMA_VERSION {
            errs.push(format!("version must be {SCHEMA_VERSION}, got {}", self.version));
        }
        let n = self.grid.n;
        let dim_ok = n == 1 || n == 2;
        if !dim_ok {
            errs.push(format!("grid.n must be 1 or 2, got {n}"));
        }
        let dim = 2 * n;
        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            errs.push(format!("grid.h must be positive, got {}", self.grid.h));
        }
        match (&self.grid.half_width, &self.grid.extents, &self.grid.origin) {
            (Some(w), None, None) => {
                if !(*w > 0.0) {
                    errs.push(format!("grid.half_width must be positive, got {w}"));
                }
            }
            (None, Some(e), Some(o)) => {
                if dim_ok && (e.len() != dim || o.len() != dim) {
                    errs.push(format!("grid.extents and grid.origin need {dim} entries"));
                }
            }
            _ => errs.push("grid needs exactly one of half_width or extents with origin".into()),
        }
        if dim_ok && self.grid.h > 0.0 {
            match self.grid.node_count() {
                Some(c) if c <= self.grid.budget() => {}
                Some(c) => errs.push(format!("grid has {c} nodes, above the node budget {}", self.grid.budget())),
                None => {}
            }
        }
        let mut shapes: Vec<(String, &Shape)> = Vec::new();
        match (&self.domain.shape, &self.domain.mask_path) {
            (Some(s), None) => shapes.push(("domain.shape".into(), s)),
            (None, Some(_)) => {}
            _ => errs.push("domain needs exactly one of shape or mask_path".into()),
        }
        for (i, s) in self.k.shapes.iter().flatten().enumerate() {
            shapes.push((format!("k.shapes[{i}]"), s));
        }
        if let Some(r) = &self.holder.region {
            shapes.push(("holder.region".into(), r));
        }
        if let Some(r) = &self.holder.collar_region {
            shapes.push(("holder.collar_region".into(), r));
        }
        for (what, s) in shapes {
            if let Some(d) = s.dim().filter(|&d| dim_ok && d != dim) {
                errs.push(format!("{what} has dimension {d}, the grid has {dim} real axes"));
            }
        }
        let alpha_variants = [
            self.alpha.effective.is_some(),
            self.alpha.printed.is_some(),
            self.alpha.csv_path.is_some(),
        ];
        if alpha_variants.iter().filter(|&&b| b).count() != 1 {
            errs.push("alpha needs exactly one of effective, printed or csv_path".into());
        }
        if !(self.alpha.scale > 0.0 && self.alpha.scale.is_finite()) {
            errs.push(format!("alpha.scale must be positive, got {}", self.alpha.scale));
        }
        if let Some(m) = &self.alpha.printed {
            if dim_ok && (m.len() != n || m.iter().any(|r| r.len() != n)) {
                errs.push(format!("alpha.printed must be {n}×{n}"));
            }
        }
        let k_variants = [
            self.k.shapes.is_some(),
            self.k.points.is_some(),
            self.k.nodes.is_some(),
            self.k.mask_path.is_some(),
        ];
        if k_variants.iter().filter(|&&b| b).count() != 1 {
            errs.push("k needs exactly one of shapes, points, nodes or mask_path".into());
        }
        if let Some(pts) = &self.k.points {
            if dim_ok && pts.iter().any(|p| p.len() != dim) {
                errs.push(format!("k.points need {dim} coordinates each"));
            }
        }
        let w = &self.weight;
        if [w.constant.is_some(), w.expression.is_some(), w.field_path.is_some()]
            .iter()
            .filter(|&&b| b)
            .count()
            > 1
        {
            errs.push("weight takes at most one of constant, expression or field_path".into());
        }
        if let Some(c) = w.constant {
            if !(c < 0.0) {
                errs.push(format!("sup ψ < 0 required (constant weight {c})"));
            }
        }
        if let Some(e) = &w.expression {
            if dim_ok {
                errs.extend(e.validate(n));
            }
        }
        if let Some(hd) = &w.holder {
            if !(hd.c >= 0.0) || !(hd.lambda > 0.0 && hd.lambda <= 1.0) {
                errs.push(format!("weight.holder needs c ≥ 0 and λ in (0, 1], got {hd:?}"));
            }
        }
        if let Err(e) = self.solver.validate() {
            errs.push(format!("solver: {e}"));
        }
        if self.tasks.is_empty() {
            errs.push("tasks must not be empty".into());
        }
        if !(self.checks.oracle_tol >= 0.0) || !(self.checks.two_constants_slack >= 0.0) {
            errs.push("checks tolerances must be nonnegative".into());
        }
        if self.checks.two_constants_count == 0 {
            errs.push("checks.two_constants_count must be positive".into());
        }
        if self.holder.pair_budget < alpha_measure::holder::MIN_PAIR_BUDGET {
            errs.push(format!(
                "holder.pair_budget must be at least {}",
                alpha_measure::holder::MIN_PAIR_BUDGET
            ));
        }
        if let Some(nk) = &self.holder.near_k {
            if !(nk.c > 0.0) || !(nk.lambda > 0.0 && nk.lambda <= 1.0) {
                errs.push(format!("holder.near_k needs C > 0 and λ in (0, 1], got {nk:?}"));
            }
        }
        if let Some(cw) = self.holder.collar_width {
            if !(cw > 0.0) {
                errs.push(format!("holder.collar_width must be positive, got {cw}"));
            }
        }
        let paths = [
            ("domain.mask_path", &self.domain.mask_path),
            ("alpha.csv_path", &self.alpha.csv_path),
            ("k.mask_path", &self.k.mask_path),
            ("weight.field_path", &self.weight.field_path),
        ];
        for (what, p) in paths {
            if let Some(p) = p {
                let full = self.resolve(p);
                if !full.is_file() {
                    errs.push(format!("{what} {} does not exist", full.display()));
                }
            }
        }
        errs
    }

    /// Every validation error. Geometry-dependent checks (shapes inside the
    /// grid, a nonempty `K`, `sup_K ψ < 0` for non-constant weights) run
    /// only when the structural checks pass.
    pub fn validation_errors(&self) -> Vec<String> {
        let errs = self.structural_errors();
        if !errs.is_empty() {
            return errs;
        }
        match Scenario::build(self) {
            Ok(_) => Vec::new(),
            Err(errs) => errs,
        }
    }

    /// Parses and validates JSON text. `origin` is used in messages and as
    /// the base of relative paths.
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let schema = |message: String| ConfigError::Schema {
            path: origin.to_path_buf(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        let mut cfg: ScenarioConfig = serde_json::from_value(value.clone()).map_err(|e| schema(e.to_string()))?;
        cfg.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.hash = canonical_hash(&value);
        let errs = cfg.validation_errors();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

/// SHA-256 (hex) of the compact JSON serialization with sorted keys.
pub fn canonical_hash(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so `to_string` is canonical.
    let bytes = serde_json::to_vec(value).expect("a JSON value always serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_json_str(&text, path)
}
