//! Discrete Perron envelopes as obstacle problems, the Dirichlet problem
//! on `D ∖ K`, and a direct banded-elimination oracle.
//!
//! The envelope of an obstacle `φ` (equal to `ψ` on `K`, `0` elsewhere) is
//! the largest `u` with `L_h u ≥ 0` on the interior, `u ≤ φ`, and `u = 0` on
//! the boundary. It is computed by projected relaxation started at `φ`.
//! When `K` carries a fat shape and the operator cuts arms, `K` is treated
//! as a Dirichlet hole with data `ψ`.

mod relax;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{io, DomainMask, GridFunction, NodeClass, NodeSet};
use crate::linalg::BandedMatrix;
use crate::operator::DiscreteOperator;

use relax::{relax, Schedule};

/// Largest unknown count accepted by [`dense_oracle_solve`].
pub const ORACLE_MAX_UNKNOWNS: usize = 10_000;
/// Nodes with `u ≥ φ - CONTACT_TOL` belong to the contact set.
pub const CONTACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Colour classes updated one after another, each class in parallel.
    TwoColor,
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Over-relaxation factor in `(0, 2)`. `None` uses the factor of
    /// [`SolveOptions::tuned_for`] for the solve's mask.
    pub relaxation: Option<f64>,
    pub ordering: SweepOrder,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_sweeps: 1_000_000,
            relaxation: None,
            ordering: SweepOrder::TwoColor,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::input(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(w) = self.relaxation {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::input(format!("relaxation factor must lie in (0, 2), got {w}")));
            }
        }
        if self.max_sweeps == 0 {
            return Err(Error::input("max_sweeps must be positive"));
        }
        Ok(())
    }

    pub fn with_relaxation(mut self, relaxation: f64) -> Self {
        self.relaxation = Some(relaxation);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_ordering(mut self, ordering: SweepOrder) -> Self {
        self.ordering = ordering;
        self
    }

    /// `2 / (1 + sin(π h / L))` with `L` the widest extent of the interior,
    /// the optimal factor for the Laplacian on a box of side `L`.
    pub fn tuned_for(mut self, mask: &DomainMask) -> Self {
        let g = mask.grid();
        let dim = g.dim();
        let mut lo = [usize::MAX; 4];
        let mut hi = [0usize; 4];
        for &i in mask.interior() {
            let l = g.lattice(i);
            for a in 0..dim {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(l[a]);
            }
        }
        let steps = (0..dim).map(|a| hi[a] - lo[a] + 2).max().unwrap_or(2) as f64;
        self.relaxation = Some(2.0 / (1.0 + (std::f64::consts::PI / steps).sin()));
        self
    }

    /// Fills in the relaxation factor for `mask` if it is unset.
    pub fn resolved(self, mask: &DomainMask) -> Self {
        match self.relaxation {
            Some(_) => self,
            None => self.tuned_for(mask),
        }
    }
}

/// `φ = ψ` on `K`, `0` on the rest of the interior and on the boundary.
#[derive(Debug, Clone)]
pub struct Obstacle {
    phi: GridFunction,
    k: NodeSet,
    mask: Arc<DomainMask>,
}

impl Obstacle {
    /// `psi` is read on `K` only.
    pub fn new(mask: &Arc<DomainMask>, k: &NodeSet, psi: &GridFunction) -> Result<Self> {
        psi.ensure_same_grid(mask.grid())?;
        let mut phi = GridFunction::zeros(mask.grid().clone());
        let mut sup = f64::NEG_INFINITY;
        for &i in k.indices() {
            if !mask.is_interior(i) {
                return Err(Error::NodeSet(format!("node {i} of K is not interior")));
            }
            let v = psi.get(i);
            if !v.is_finite() {
                return Err(Error::InvalidWeight(format!("non-finite weight at node {i}")));
            }
            sup = sup.max(v);
            phi.set(i, v);
        }
        if !k.is_empty() && !(sup < 0.0) {
            return Err(Error::WeightNotNegative(sup));
        }
        Ok(Obstacle {
            phi,
            k: k.clone(),
            mask: mask.clone(),
        })
    }

    /// Obstacle with `ψ ≡ c` on `K`.
    pub fn constant(mask: &Arc<DomainMask>, k: &NodeSet, c: f64) -> Result<Self> {
        Self::new(mask, k, &GridFunction::constant(mask.grid().clone(), c))
    }

    pub fn phi(&self) -> &GridFunction {
        &self.phi
    }

    pub fn k(&self) -> &NodeSet {
        &self.k
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        &self.mask
    }
}

/// Output of [`perron_envelope`].
#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    pub u: GridFunction,
    pub iterations: usize,
    pub update: f64,
    pub residual: f64,
    /// Interior nodes with `u ≥ φ - 1e-9`, sorted.
    pub contact: Vec<usize>,
    /// Largest pointwise increase between consecutive sweeps.
    pub max_increase: f64,
    pub options: SolveOptions,
    /// True when `K` was imposed as a Dirichlet hole with cut arms.
    pub hole_cuts: bool,
    /// The operator the solve used (with the hole, if any).
    pub operator: Arc<DiscreteOperator>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub iterations: usize,
    pub update: f64,
    pub residual: f64,
    pub contact_count: usize,
    pub max_increase: f64,
    pub hole_cuts: bool,
    pub tags: Vec<String>,
    pub options: SolveOptions,
}

impl EnvelopeResult {
    pub fn summary(&self) -> EnvelopeSummary {
        EnvelopeSummary {
            iterations: self.iterations,
            update: self.update,
            residual: self.residual,
            contact_count: self.contact.len(),
            max_increase: self.max_increase,
            hole_cuts: self.hole_cuts,
            tags: self.tags.clone(),
            options: self.options,
        }
    }

    /// Writes `<stem>.f64`, `<stem>.json` (grid descriptor) and
    /// `<stem>.summary.json`.
    pub fn export(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let (data, meta) = io::write_field_raw(&self.u, stem)?;
        let summary = stem.with_extension("summary.json");
        std::fs::write(&summary, serde_json::to_string_pretty(&self.summary())? + "\n")?;
        Ok(vec![data, meta, summary])
    }
}

fn free_positions(op: &DiscreteOperator) -> Vec<usize> {
    let interior = op.mask().interior();
    match op.hole() {
        Some(k) => (0..interior.len()).filter(|&p| !k.contains(interior[p])).collect(),
        None => (0..interior.len()).collect(),
    }
}

/// Largest discrete subsolution below the obstacle with zero boundary data.
pub fn perron_envelope(op: &DiscreteOperator, obstacle: &Obstacle, opts: &SolveOptions) -> Result<EnvelopeResult> {
    opts.validate()?;
    let opts = &opts.resolved(op.mask());
    if op.hole().is_some() {
        return Err(Error::input("pass the operator without a hole"));
    }
    if op.mask().classes() != obstacle.mask.classes() {
        return Err(Error::GridMismatch("obstacle and operator use different masks".into()));
    }
    let grid = op.grid().clone();
    let k = &obstacle.k;
    let phi = obstacle.phi.values();
    let hole_cuts = !k.is_empty() && k.geometry().is_some() && op.is_cut();
    let solve_op = if hole_cuts { op.with_hole(k)? } else { op.clone() };

    let mut u = phi.to_vec();
    let mut stats = relax::SweepStats::default();
    if !k.is_empty() {
        let free = free_positions(&solve_op);
        let sched = Schedule::new(&solve_op, &free, opts.ordering);
        stats = relax(&solve_op, &mut u, Some(phi), &free, &sched, opts)?;
    }
    let contact = op
        .mask()
        .interior()
        .iter()
        .copied()
        .filter(|&i| u[i] >= phi[i] - CONTACT_TOL)
        .collect();
    Ok(EnvelopeResult {
        u: GridFunction::new(grid, u)?,
        iterations: stats.iterations,
        update: stats.update,
        residual: stats.residual,
        contact,
        max_increase: stats.max_increase,
        options: *opts,
        hole_cuts,
        operator: Arc::new(solve_op),
        tags: Vec::new(),
    })
}

/// Output of [`dirichlet_solve`].
#[derive(Debug, Clone)]
pub struct DirichletResult {
    pub u: GridFunction,
    pub iterations: usize,
    pub update: f64,
    pub residual: f64,
    pub operator: Arc<DiscreteOperator>,
}

/// `L_h u = 0` on `Interior ∖ hole`, `u = data` on `hole ∪ Boundary`.
pub fn dirichlet_solve(
    op: &DiscreteOperator,
    data: &GridFunction,
    hole: &NodeSet,
    opts: &SolveOptions,
) -> Result<DirichletResult> {
    opts.validate()?;
    let opts = &opts.resolved(op.mask());
    data.ensure_same_grid(op.grid())?;
    let mask = op.mask();
    let solve_op = if hole.is_empty() { op.clone() } else { op.with_hole(hole)? };
    let mut u = vec![0.0; data.values().len()];
    for (i, v) in u.iter_mut().enumerate() {
        let constrained = mask.class(i) == NodeClass::Boundary || hole.contains(i);
        if constrained {
            let d = data.get(i);
            if !d.is_finite() {
                return Err(Error::input(format!("non-finite Dirichlet data at node {i}")));
            }
            *v = d;
        }
    }
    let free = free_positions(&solve_op);
    let sched = Schedule::new(&solve_op, &free, opts.ordering);
    let stats = relax(&solve_op, &mut u, None, &free, &sched, opts)?;
    Ok(DirichletResult {
        u: GridFunction::new(op.grid().clone(), u)?,
        iterations: stats.iterations,
        update: stats.update,
        residual: stats.residual,
        operator: Arc::new(solve_op),
    })
}

/// Direct elimination of `L_h u = 0` on `Interior ∖ K` with `u = ψ` on `K`
/// and `u = 0` on the boundary, using the same operator variant as
/// [`perron_envelope`] would.
pub fn dense_oracle_solve(op: &DiscreteOperator, k: &NodeSet, psi: &GridFunction) -> Result<GridFunction> {
    psi.ensure_same_grid(op.grid())?;
    if op.hole().is_some() {
        return Err(Error::input("pass the operator without a hole"));
    }
    let mask = op.mask();
    let hop = if k.is_empty() { op.clone() } else { op.with_hole(k)? };
    let interior = mask.interior();
    let free = free_positions(&hop);
    if free.len() > ORACLE_MAX_UNKNOWNS {
        return Err(Error::input(format!(
            "oracle is limited to {ORACLE_MAX_UNKNOWNS} unknowns, got {}",
            free.len()
        )));
    }
    let mut u = vec![0.0; psi.values().len()];
    for &i in k.indices() {
        u[i] = psi.get(i);
    }
    let mut rank = vec![usize::MAX; u.len()];
    for (r, &p) in free.iter().enumerate() {
        rank[interior[p]] = r;
    }
    let mut bw = 0;
    for (r, &p) in free.iter().enumerate() {
        let i = interior[p];
        for &(off, _) in &hop.stencil(p).entries {
            let q = rank[(i as isize + off) as usize];
            if q != usize::MAX {
                bw = bw.max(r.abs_diff(q));
            }
        }
    }
    let mut a = BandedMatrix::zeros(free.len(), bw);
    let mut rhs = vec![0.0; free.len()];
    for (r, &p) in free.iter().enumerate() {
        let i = interior[p];
        let s = hop.stencil(p);
        a.add(r, r, s.center);
        for &(off, w) in &s.entries {
            let j = (i as isize + off) as usize;
            match rank[j] {
                usize::MAX => rhs[r] -= w * u[j],
                q => a.add(r, q, w),
            }
        }
    }
    let x = a.factor()?.solve(&rhs);
    for (r, &p) in free.iter().enumerate() {
        u[interior[p]] = x[r];
    }
    GridFunction::new(op.grid().clone(), u)
}

pub const REGULARIZED_TAG: &str = "regularized-at-h";

/// Upper semicontinuous regularization at fixed `h`: the identity on the
/// field, recorded as a tag. Idempotent.
pub fn upper_regularize(mut result: EnvelopeResult) -> EnvelopeResult {
    if !result.tags.iter().any(|t| t == REGULARIZED_TAG) {
        result.tags.push(REGULARIZED_TAG.to_string());
    }
    result
}
