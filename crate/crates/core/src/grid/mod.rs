//! Uniform grids over ℂⁿ ≅ ℝ²ⁿ (n ∈ {1, 2}), domain masks, node sets and
//! grid functions.
//!
//! Real axes are ordered `x1, y1[, x2, y2]` and nodes are indexed row-major
//! with the last axis varying fastest, so the node with lattice coordinates
//! `(k0, .., k_{d-1})` has index `Σ k_a · stride_a` where
//! `stride_{d-1} = 1` and `stride_a = stride_{a+1} · extent_{a+1}`.
//! Node coordinates are computed as `origin[a] + k_a as f64 * h` and nothing
//! else, which keeps node positions bit-reproducible.

mod distance;
pub mod io;
mod mask;
mod shape;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::{distance_field, DistanceField};
pub use mask::{classify_domain, DomainMask, DomainSpec, NodeClass, NodeSet};
pub use shape::Shape;

/// Largest number of real axes supported (n = 2).
pub const MAX_DIM: usize = 4;

/// Nodes whose shape level lies within `LEVEL_SNAP · h` of zero are on the
/// boundary. Rounding otherwise puts lattice points of an analytic boundary
/// on either side at random.
pub const LEVEL_SNAP: f64 = 1e-9;

/// Default cap on the total node count of a grid.
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

/// Names of the real axes in index order.
pub const AXIS_NAMES: [&str; MAX_DIM] = ["x1", "y1", "x2", "y2"];

/// Lattice coordinates of a node; only the first `dim` entries are used.
pub type Lattice = [usize; MAX_DIM];

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    n: usize,
    extents: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

/// Builds a grid with the default node budget.
pub fn build_grid(n: usize, extents: &[usize], h: f64, origin: &[f64]) -> Result<Arc<ComplexGrid>> {
    ComplexGrid::with_budget(n, extents, h, origin, DEFAULT_NODE_BUDGET)
}

impl ComplexGrid {
    pub fn with_budget(
        n: usize,
        extents: &[usize],
        h: f64,
        origin: &[f64],
        budget: usize,
    ) -> Result<Arc<Self>> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let dim = 2 * n;
        if extents.len() != dim || origin.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and origin coordinates, got {} and {}",
                extents.len(),
                origin.len()
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if let Some(&e) = extents.iter().find(|&&e| e < 3) {
            return Err(Error::InvalidGrid(format!("every axis needs at least 3 nodes, got {e}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let mut len: usize = 1;
        for &e in extents {
            len = len.checked_mul(e).ok_or(Error::NodeBudget {
                nodes: usize::MAX,
                budget,
            })?;
        }
        if len > budget {
            return Err(Error::NodeBudget { nodes: len, budget });
        }
        let mut strides = vec![1usize; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * extents[a + 1];
        }
        Ok(Arc::new(ComplexGrid {
            n,
            extents: extents.to_vec(),
            h,
            origin: origin.to_vec(),
            strides,
            len,
        }))
    }

    /// Square grid centred on `center` covering `[c - half_width, c + half_width]`
    /// on every real axis, with spacing `h`. `half_width / h` is rounded up.
    pub fn centered(n: usize, half_width: f64, h: f64, budget: usize) -> Result<Arc<Self>> {
        let k = (half_width / h - 1e-9).ceil() as usize;
        let dim = 2 * n;
        let extents = vec![2 * k + 1; dim];
        let origin = vec![-(k as f64) * h; dim];
        Self::with_budget(n, &extents, h, &origin, budget)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of real axes, `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lattice(&self, idx: usize) -> Lattice {
        let mut out = [0usize; MAX_DIM];
        let mut rem = idx;
        for a in 0..self.dim() {
            out[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
        out
    }

    pub fn index(&self, lattice: &[usize]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim() {
            if lattice[a] >= self.extents[a] {
                return None;
            }
            idx += lattice[a] * self.strides[a];
        }
        Some(idx)
    }

    /// Index of the node displaced from `idx` by `offset` lattice steps, if it
    /// exists on the grid.
    pub fn offset(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let lat = self.lattice(idx);
        let mut out = 0usize;
        for a in 0..self.dim() {
            let k = lat[a] as i64 + offset[a];
            if k < 0 || k >= self.extents[a] as i64 {
                return None;
            }
            out += k as usize * self.strides[a];
        }
        Some(out)
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.origin[axis] + k as f64 * self.h
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        let lat = self.lattice(idx);
        for a in 0..self.dim() {
            out[a] = self.coord(a, lat[a]);
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    /// True if the node lies on the outermost layer of the grid.
    pub fn on_edge(&self, idx: usize) -> bool {
        let lat = self.lattice(idx);
        (0..self.dim()).any(|a| lat[a] == 0 || lat[a] + 1 == self.extents[a])
    }

    /// Squared distance between two nodes in lattice units.
    pub fn lattice_dist2(&self, a: usize, b: usize) -> u64 {
        let la = self.lattice(a);
        let lb = self.lattice(b);
        (0..self.dim())
            .map(|k| {
                let d = la[k] as i64 - lb[k] as i64;
                (d * d) as u64
            })
            .sum()
    }

    /// Euclidean distance between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        (self.lattice_dist2(a, b) as f64).sqrt() * self.h
    }

    /// Index of the grid node nearest to `p` (per-axis rounding, clamped).
    pub fn nearest_node(&self, p: &[f64]) -> usize {
        let mut lat = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let k = ((p[a] - self.origin[a]) / self.h).round();
            lat[a] = k.clamp(0.0, (self.extents[a] - 1) as f64) as usize;
        }
        self.index(&lat).expect("clamped lattice is on the grid")
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            n: self.n,
            extents: self.extents.clone(),
            h: self.h,
            origin: self.origin.clone(),
            axis_order: AXIS_NAMES[..self.dim()].iter().map(|s| s.to_string()).collect(),
            layout: "row-major, last axis fastest".into(),
        }
    }
}

/// Serializable description of a grid, used as the sidecar of raw field dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub n: usize,
    pub extents: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    pub axis_order: Vec<String>,
    pub layout: String,
}

impl GridDescriptor {
    pub fn build(&self, budget: usize) -> Result<Arc<ComplexGrid>> {
        ComplexGrid::with_budget(self.n, &self.extents, self.h, &self.origin, budget)
    }
}

/// A real value per grid node.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<ComplexGrid>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl GridFunction {
    pub fn new(grid: Arc<ComplexGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Arc<ComplexGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Arc<ComplexGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Arc<ComplexGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut p = [0.0; MAX_DIM];
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                f(&p[..dim])
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<ComplexGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn ensure_same_grid(&self, grid: &ComplexGrid) -> Result<()> {
        if *self.grid != *grid {
            return Err(Error::GridMismatch("field lives on a different grid".into()));
        }
        Ok(())
    }

    /// Maximum of `|self - other|` over the given nodes.
    pub fn max_abs_diff_on(&self, other: &GridFunction, nodes: impl IntoIterator<Item = usize>) -> f64 {
        nodes
            .into_iter()
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_on(&self, nodes: impl IntoIterator<Item = usize>) -> f64 {
        nodes.into_iter().map(|i| self.values[i].abs()).fold(0.0, f64::max)
    }
}
