//! The discrete operator `L_h ≈ Δ_α`, subharmonicity tests, Poisson
//! kernels and the discrete maximum principle.
//!
//! `Δ_α u = scale · Σ a_jk ∂²u/∂z_j∂z̄_k` is rewritten over the real axes
//! as `Σ B_pq ∂²u/∂x_p∂x_q` and discretized with central differences:
//! three-point second differences on every axis and, for each nonzero
//! `B_pq` (p ≠ q), the seven-point mixed formula whose diagonal corners
//! follow the sign of `B_pq`. All off-centre weights are then nonnegative
//! exactly when `B` is diagonally dominant, which assembly enforces.
//!
//! When the mask keeps its shape (cut cells), an axis arm that leaves the
//! domain is shortened to the exact crossing of the boundary
//! (Shortley–Weller). The value stored at the outside node is read as the
//! value at the crossing. Fat compacts get the same treatment from outside
//! through [`DiscreteOperator::with_hole`]. Nodes whose stencil has both a
//! shortened arm and mixed terms keep full arms.

mod form;
mod kernel;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, DomainMask, GridFunction, NodeSet, Shape, MAX_DIM};

pub use form::{
    form_to_effective_coeffs, read_coeff_csv, AlphaForm, CoeffField, Coeffs, PrintedForm, DEFAULT_PD_EPS,
    HERMITIAN_TOL,
};
pub use kernel::{poisson_kernel, submean_check, DiscretePoissonKernel, SubmeanReport};

/// Shortest admissible arm, as a fraction of `h`.
const MIN_ARM: f64 = 1e-6;
/// Slack on the diagonal-dominance ratio.
const RATIO_SLACK: f64 = 1e-12;

/// `L u(i) = center · u(i) + Σ weight · u(i + offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub center: f64,
    pub entries: Vec<(isize, f64)>,
}

impl Stencil {
    #[inline]
    pub fn apply(&self, u: &[f64], i: usize) -> f64 {
        let mut s = self.center * u[i];
        for &(off, w) in &self.entries {
            s += w * u[(i as isize + off) as usize];
        }
        s
    }

    /// `Σ weight · u(neighbour)`, i.e. `L u(i)` without the centre term.
    #[inline]
    pub fn neighbour_sum(&self, u: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for &(off, w) in &self.entries {
            s += w * u[(i as isize + off) as usize];
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    alpha: Arc<AlphaForm>,
    mask: Arc<DomainMask>,
    stencils: Vec<Stencil>,
    /// Stencil id per interior position.
    ids: Vec<u32>,
    /// Interior nodes held fixed by solvers (a Dirichlet hole).
    hole: Option<NodeSet>,
    has_cross: bool,
    max_ratio: f64,
    cut_nodes: usize,
}

fn lattice_offset(grid: &ComplexGrid, v: &[i64]) -> isize {
    v.iter()
        .zip(grid.strides())
        .map(|(&k, &s)| k as isize * s as isize)
        .sum()
}

fn unit(dim: usize, a: usize, s: i64) -> [i64; MAX_DIM] {
    let mut v = [0i64; MAX_DIM];
    debug_assert!(a < dim);
    v[a] = s;
    v
}

fn dominance_ratio(b: &[[f64; 4]; 4], dim: usize) -> f64 {
    (0..dim)
        .map(|p| {
            let off: f64 = (0..dim).filter(|&q| q != p).map(|q| b[p][q].abs()).sum();
            off / b[p][p]
        })
        .fold(0.0, f64::max)
}

/// Builds the stencil at an interior node from the real coefficients and
/// per-arm fractions `t[axis][0 = backward, 1 = forward]`.
fn build_stencil(grid: &ComplexGrid, b: &[[f64; 4]; 4], t: &[[f64; 2]; MAX_DIM]) -> Stencil {
    let dim = grid.dim();
    let h2 = grid.h() * grid.h();
    let mut acc: Vec<(isize, f64)> = Vec::with_capacity(2 * dim + 2 * dim * dim);
    let mut add = |off: isize, w: f64| {
        if let Some(e) = acc.iter_mut().find(|e| e.0 == off) {
            e.1 += w;
        } else {
            acc.push((off, w));
        }
    };
    let mut center = 0.0;
    for p in 0..dim {
        let (tm, tp) = (t[p][0], t[p][1]);
        let c = 2.0 * b[p][p] / h2;
        add(lattice_offset(grid, &unit(dim, p, 1)), c / (tp * (tp + tm)));
        add(lattice_offset(grid, &unit(dim, p, -1)), c / (tm * (tp + tm)));
        center -= c / (tp * tm);
    }
    for p in 0..dim {
        for q in p + 1..dim {
            let bpq = b[p][q];
            if bpq == 0.0 {
                continue;
            }
            let w = bpq.abs() / h2;
            let s = if bpq > 0.0 { 1 } else { -1 };
            let mut corner = [0i64; MAX_DIM];
            corner[p] = 1;
            corner[q] = s;
            add(lattice_offset(grid, &corner), w);
            corner[p] = -1;
            corner[q] = -s;
            add(lattice_offset(grid, &corner), w);
            for a in [p, q] {
                add(lattice_offset(grid, &unit(dim, a, 1)), -w);
                add(lattice_offset(grid, &unit(dim, a, -1)), -w);
            }
            center += 2.0 * w;
        }
    }
    acc.retain(|e| e.1 != 0.0);
    acc.sort_by_key(|e| e.0);
    Stencil { center, entries: acc }
}

/// Arm fractions at `idx`: arms crossing out of the domain shape or into
/// the hole shape are shortened to the crossing.
fn arm_fractions(
    grid: &ComplexGrid,
    mask: &DomainMask,
    hole: Option<(&[bool], &Shape)>,
    idx: usize,
) -> Option<[[f64; 2]; MAX_DIM]> {
    let dim = grid.dim();
    let mut t = [[1.0; 2]; MAX_DIM];
    let mut cut = false;
    let x = grid.point(idx);
    let in_hole = hole.is_some_and(|(m, _)| m[idx]);
    if in_hole {
        return None;
    }
    for a in 0..dim {
        for (slot, s) in [(0usize, -1i64), (1, 1)] {
            let y = grid.offset(idx, &unit(dim, a, s)[..dim]).expect("interior nodes are off the edge");
            let py = grid.point(y);
            let shape = if !mask.is_interior(y) {
                mask.geometry()
            } else if let Some((m, shape)) = hole {
                // hole nodes outside the shape are isolated: full arms
                (m[y] && shape.contains_node_closed(&py, grid.h())).then_some(shape)
            } else {
                None
            };
            if let Some(shape) = shape {
                t[a][slot] = shape.crossing(&x, &py).max(MIN_ARM);
                cut = true;
            }
        }
    }
    cut.then_some(t)
}

/// Assembles `L_h` for `alpha` on `mask`.
pub fn assemble_operator(alpha: &AlphaForm, mask: &Arc<DomainMask>) -> Result<DiscreteOperator> {
    assemble(Arc::new(alpha.clone()), mask.clone(), None)
}

fn assemble(alpha: Arc<AlphaForm>, mask: Arc<DomainMask>, hole: Option<NodeSet>) -> Result<DiscreteOperator> {
    let grid = mask.grid().clone();
    alpha.check_grid(&grid)?;
    let n = grid.n();
    let dim = grid.dim();
    let hole_members = hole.as_ref().map(|k| k.membership(grid.len()));
    let hole_geom = match (&hole, mask.geometry()) {
        (Some(k), Some(_)) => k.geometry().cloned(),
        _ => None,
    };
    let hole_ref = match (&hole_members, &hole_geom) {
        (Some(m), Some(s)) => Some((m.as_slice(), s)),
        _ => None,
    };

    let full = [[1.0; 2]; MAX_DIM];
    let mut stencils = Vec::new();
    let constant = alpha.is_constant();
    let mut has_cross = false;
    let mut max_ratio = 0.0_f64;
    if constant {
        let b = alpha.at(0).real_matrix(n);
        let r = dominance_ratio(&b, dim);
        if r > 1.0 + RATIO_SLACK {
            let node = mask.interior()[0];
            return Err(Error::PositiveType { node, ratio: r });
        }
        max_ratio = r;
        has_cross = r > 0.0;
        stencils.push(build_stencil(&grid, &b, &full));
    }

    let interior = mask.interior();
    let per_node: Vec<Result<(Option<Stencil>, f64, bool)>> = interior
        .par_iter()
        .map(|&idx| {
            let b = alpha.at(idx).real_matrix(n);
            let ratio = if constant { max_ratio } else { dominance_ratio(&b, dim) };
            if ratio > 1.0 + RATIO_SLACK {
                return Err(Error::PositiveType { node: idx, ratio });
            }
            let cross = ratio > 0.0;
            let t = if cross {
                None
            } else {
                arm_fractions(&grid, &mask, hole_ref, idx)
            };
            let own = match (t, constant) {
                (None, true) => None,
                (t, _) => Some(build_stencil(&grid, &b, &t.unwrap_or(full))),
            };
            Ok((own, ratio, t.is_some()))
        })
        .collect();

    let mut ids = Vec::with_capacity(interior.len());
    let mut cut_nodes = 0;
    for r in per_node {
        let (own, ratio, cut) = r?;
        max_ratio = max_ratio.max(ratio);
        has_cross |= ratio > 0.0;
        cut_nodes += cut as usize;
        match own {
            None => ids.push(0u32),
            Some(s) => {
                ids.push(stencils.len() as u32);
                stencils.push(s);
            }
        }
    }
    Ok(DiscreteOperator {
        alpha,
        mask,
        stencils,
        ids,
        hole,
        has_cross,
        max_ratio,
        cut_nodes,
    })
}

/// Default residual tolerance `1e-9 · scale · ‖u‖∞ / h²`.
pub fn default_tolerance(op: &DiscreteOperator, u: &GridFunction) -> f64 {
    let mask = op.mask();
    let norm = (0..u.values().len())
        .filter(|&i| mask.class(i) != crate::grid::NodeClass::Exterior)
        .map(|i| u.get(i).abs())
        .fold(0.0, f64::max);
    let h = mask.grid().h();
    1e-9 * op.alpha().scale() * norm.max(f64::MIN_POSITIVE) / (h * h)
}

impl DiscreteOperator {
    pub fn alpha(&self) -> &AlphaForm {
        &self.alpha
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        &self.mask
    }

    pub fn grid(&self) -> &Arc<ComplexGrid> {
        self.mask.grid()
    }

    pub fn hole(&self) -> Option<&NodeSet> {
        self.hole.as_ref()
    }

    /// True if boundary arms are cut at the exact domain boundary.
    pub fn is_cut(&self) -> bool {
        self.mask.geometry().is_some()
    }

    pub fn has_cross_terms(&self) -> bool {
        self.has_cross
    }

    /// Largest off-diagonal dominance ratio seen during assembly (≤ 1).
    pub fn max_dominance_ratio(&self) -> f64 {
        self.max_ratio
    }

    /// Number of interior nodes with a shortened arm.
    pub fn cut_node_count(&self) -> usize {
        self.cut_nodes
    }

    /// Stencil of the `pos`-th interior node.
    #[inline]
    pub fn stencil(&self, pos: usize) -> &Stencil {
        &self.stencils[self.ids[pos] as usize]
    }

    pub fn distinct_stencils(&self) -> usize {
        self.stencils.len()
    }

    /// The same operator with `k` held fixed by solvers. Arms of nodes
    /// outside `k` that enter a fat `k` are cut when the mask has cut cells.
    pub fn with_hole(&self, k: &NodeSet) -> Result<DiscreteOperator> {
        if self.hole.is_some() {
            return Err(Error::input("operator already has a hole"));
        }
        if let Some(&i) = k.indices().iter().find(|&&i| !self.mask.is_interior(i)) {
            return Err(Error::NodeSet(format!("hole node {i} is not interior")));
        }
        assemble(self.alpha.clone(), self.mask.clone(), Some(k.clone()))
    }

    /// The operator on the node-snapped version of the mask (no cut arms,
    /// no hole), which reads every stored value as a value at its node.
    pub fn snapped(&self) -> Result<DiscreteOperator> {
        assemble(self.alpha.clone(), Arc::new(self.mask.snapped()), None)
    }

    /// Same stencils multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<DiscreteOperator> {
        let scale = self.alpha.scale() * c;
        let alpha = (*self.alpha).clone().with_scale(scale)?;
        assemble(Arc::new(alpha), self.mask.clone(), self.hole.clone())
    }

    /// `L_h u` at every interior node; NaN elsewhere.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        u.ensure_same_grid(self.grid())?;
        let vals = u.values();
        let interior = self.mask.interior();
        let res: Vec<f64> = (0..interior.len())
            .into_par_iter()
            .map(|p| self.stencil(p).apply(vals, interior[p]))
            .collect();
        let mut out = vec![f64::NAN; vals.len()];
        for (p, &i) in interior.iter().enumerate() {
            out[i] = res[p];
        }
        GridFunction::new(self.grid().clone(), out)
    }

    /// `L_h u(i) / |center(i)|` at interior positions: the change a single
    /// Gauss–Seidel update would make.
    pub fn normalized_residual(&self, u: &[f64], pos: usize) -> f64 {
        let s = self.stencil(pos);
        s.apply(u, self.mask.interior()[pos]) / s.center.abs()
    }
}

/// Verdict of [`is_alpha_subharmonic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubharmonicVerdict {
    pub verdict: bool,
    pub tol: f64,
    pub min_residual: f64,
    pub max_residual: f64,
    /// `(node, residual)` for every node with residual below `-tol`.
    pub violations: Vec<(usize, f64)>,
}

/// `L_h u ≥ -tol` at every interior node. `tol` defaults to
/// [`default_tolerance`].
pub fn is_alpha_subharmonic(u: &GridFunction, op: &DiscreteOperator, tol: Option<f64>) -> Result<SubharmonicVerdict> {
    let r = op.apply(u)?;
    let tol = tol.unwrap_or_else(|| default_tolerance(op, u));
    let mut min_residual = f64::INFINITY;
    let mut max_residual = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for &i in op.mask().interior() {
        let v = r.get(i);
        min_residual = min_residual.min(v);
        max_residual = max_residual.max(v);
        if !(v >= -tol) {
            violations.push((i, v));
        }
    }
    Ok(SubharmonicVerdict {
        verdict: violations.is_empty(),
        tol,
        min_residual,
        max_residual,
        violations,
    })
}

/// Writes a violation list as CSV `node,residual`.
pub fn write_violations_csv(v: &SubharmonicVerdict, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "node,residual")?;
    for (i, r) in &v.violations {
        writeln!(out, "{i},{r:?}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleReport {
    pub holds: bool,
    pub interior_max: f64,
    pub boundary_max: f64,
    pub argmax: usize,
}

/// `max_Interior u ≤ max_Boundary u + tol`. The operator is only used to
/// confirm the mask matches.
pub fn max_principle_check(
    u: &GridFunction,
    mask: &DomainMask,
    op: &DiscreteOperator,
    tol: f64,
) -> Result<MaxPrincipleReport> {
    u.ensure_same_grid(mask.grid())?;
    if op.mask().classes() != mask.classes() {
        return Err(Error::GridMismatch("operator was assembled on another mask".into()));
    }
    let mut argmax = mask.interior()[0];
    for &i in mask.interior() {
        if u.get(i) > u.get(argmax) {
            argmax = i;
        }
    }
    let boundary_max = mask
        .boundary_nodes()
        .into_iter()
        .map(|i| u.get(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let interior_max = u.get(argmax);
    Ok(MaxPrincipleReport {
        holds: interior_max <= boundary_max + tol,
        interior_max,
        boundary_max,
        argmax,
    })
}

#[cfg(test)]
mod tests;
