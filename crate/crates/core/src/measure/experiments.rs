use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{solve_measure, MeasureField, MeasureKind, WeightSpec, COMPARE_TOL};
use crate::envelope::SolveOptions;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, NodeClass, NodeSet, MAX_DIM};
use crate::operator::DiscreteOperator;

/// One line of a convergence table. `order_violation` is the largest
/// breach of the pointwise ordering expected between this row's field and
/// the previous row's; it is not part of the CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub j: usize,
    pub h: f64,
    pub sup_gap: f64,
    pub monotone_ok: bool,
    pub order_violation: f64,
}

/// Gaps `‖ω_j - ω_limit‖_∞` along a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn is_monotone(&self) -> bool {
        self.rows.iter().all(|r| r.monotone_ok)
    }

    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.sup_gap)
    }

    /// CSV `j,h,sup_gap,monotone_ok`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,h,sup_gap,monotone_ok\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:?},{:?},{}\n", r.j, r.h, r.sup_gap, r.monotone_ok));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Appends row `j = len + 1`. It is monotone when its gap does not
    /// exceed the previous one and the ordering breach is within tolerance.
    pub fn push(&mut self, h: f64, sup_gap: f64, order_violation: f64) {
        let prev = self.rows.last().map_or(f64::INFINITY, |r| r.sup_gap);
        let monotone_ok = sup_gap <= prev + 1e-12 && order_violation <= COMPARE_TOL;
        self.rows.push(ConvergenceRow {
            j: self.rows.len() + 1,
            h,
            sup_gap,
            monotone_ok,
            order_violation,
        });
    }
}

fn measure(op: &Arc<DiscreteOperator>, k: &NodeSet, w: &WeightSpec, opts: &SolveOptions) -> Result<MeasureField> {
    w.validate(op, k)?;
    let kind = if w.constant_value() == Some(-1.0) {
        MeasureKind::Unweighted
    } else {
        MeasureKind::Weighted
    };
    solve_measure(op, k, w, kind, opts)
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.max_abs_diff_on(b, 0..a.values().len())
}

/// Largest `lower - upper` over all nodes.
fn order_breach(lower: &GridFunction, upper: &GridFunction) -> f64 {
    (0..lower.values().len())
        .map(|i| lower.get(i) - upper.get(i))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `K_1 ⊃ K_2 ⊃ …` shrinking to `limit`: gaps to `ω(·, limit)` and the
/// ordering `ω(·, K_{j-1}) ≤ ω(·, K_j)`.
pub fn decreasing_compacts_experiment(
    op: &Arc<DiscreteOperator>,
    ks: &[NodeSet],
    limit: &NodeSet,
    w: &WeightSpec,
    opts: &SolveOptions,
) -> Result<ConvergenceTable> {
    for (j, pair) in ks.windows(2).enumerate() {
        if !pair[1].is_subset_of(&pair[0]) {
            return Err(Error::NodeSet(format!("K_{} is not contained in K_{}", j + 2, j + 1)));
        }
    }
    if let Some(last) = ks.last() {
        if !limit.is_subset_of(last) {
            return Err(Error::NodeSet("limit set is not contained in the last compact".into()));
        }
    }
    let target = measure(op, limit, w, opts)?;
    let mut table = ConvergenceTable {
        label: "decreasing_compacts".into(),
        rows: Vec::new(),
    };
    let mut prev: Option<GridFunction> = None;
    for k in ks {
        let f = measure(op, k, w, opts)?;
        let breach = prev.as_ref().map_or(f64::NEG_INFINITY, |p| order_breach(p, f.omega()));
        table.push(op.grid().h(), sup_diff(f.omega(), target.omega()), breach);
        prev = Some(f.envelope.u);
    }
    Ok(table)
}

/// `D_1 ⊂ D_2 ⊂ …` increasing to `limit` with a fixed `K ⊂ D_1`: gaps to
/// `ω(·, K, limit)` and the ordering `ω(·, K, D_j) ≤ ω(·, K, D_{j-1})`.
pub fn increasing_domains_experiment(
    ops: &[Arc<DiscreteOperator>],
    limit: &Arc<DiscreteOperator>,
    k: &NodeSet,
    w: &WeightSpec,
    opts: &SolveOptions,
) -> Result<ConvergenceTable> {
    for (j, pair) in ops.windows(2).enumerate() {
        if !pair[0].mask().interior_subset_of(pair[1].mask()) {
            return Err(Error::input(format!("D_{} is not contained in D_{}", j + 1, j + 2)));
        }
    }
    if let Some(last) = ops.last() {
        if !last.mask().interior_subset_of(limit.mask()) {
            return Err(Error::input("last domain is not contained in the limit domain"));
        }
    }
    let target = measure(limit, &k.rebased(limit.mask())?, w, opts)?;
    let mut table = ConvergenceTable {
        label: "increasing_domains".into(),
        rows: Vec::new(),
    };
    let mut prev: Option<GridFunction> = None;
    for op in ops {
        let kj = k.rebased(op.mask())?;
        let f = measure(op, &kj, w, opts)?;
        let breach = prev.as_ref().map_or(f64::NEG_INFINITY, |p| order_breach(f.omega(), p));
        table.push(op.grid().h(), sup_diff(f.omega(), target.omega()), breach);
        prev = Some(f.envelope.u);
    }
    Ok(table)
}

/// Compacts `K_1 ⊂ K_2 ⊂ …` inside the set `u_set`: gaps to the envelope
/// with the obstacle on all of `u_set`, and the ordering
/// `ω(·, K_j) ≤ ω(·, K_{j-1})`.
pub fn exhaustion_experiment(
    op: &Arc<DiscreteOperator>,
    ks: &[NodeSet],
    u_set: &NodeSet,
    w: &WeightSpec,
    opts: &SolveOptions,
) -> Result<ConvergenceTable> {
    for (j, pair) in ks.windows(2).enumerate() {
        if !pair[0].is_subset_of(&pair[1]) {
            return Err(Error::NodeSet(format!("K_{} is not contained in K_{}", j + 1, j + 2)));
        }
    }
    if let Some(last) = ks.last() {
        if !last.is_subset_of(u_set) {
            return Err(Error::NodeSet("last compact is not contained in the open set".into()));
        }
    }
    let target = measure(op, u_set, w, opts)?;
    let mut table = ConvergenceTable {
        label: "exhaustion".into(),
        rows: Vec::new(),
    };
    let mut prev: Option<GridFunction> = None;
    for k in ks {
        let f = measure(op, k, w, opts)?;
        let breach = prev.as_ref().map_or(f64::NEG_INFINITY, |p| order_breach(f.omega(), p));
        table.push(op.grid().h(), sup_diff(f.omega(), target.omega()), breach);
        prev = Some(f.envelope.u);
    }
    Ok(table)
}

/// One refinement level of [`polar_union_experiment`].
#[derive(Debug, Clone)]
pub struct PolarLevel {
    pub op: Arc<DiscreteOperator>,
    pub e: NodeSet,
    /// Isolated nodes added to `E`.
    pub a: NodeSet,
}

/// Per level, `sup |ω(·, E ∪ A) - ω(·, E)|` over nodes farther than
/// `exclusion` from every node of `A`. Rows are levels in the given order;
/// `order_violation` records `ω(·, E ∪ A) ≤ ω(·, E)` within the level.
pub fn polar_union_experiment(levels: &[PolarLevel], exclusion: f64, opts: &SolveOptions) -> Result<ConvergenceTable> {
    let mut table = ConvergenceTable {
        label: "polar_union".into(),
        rows: Vec::new(),
    };
    for level in levels {
        if level.a.indices().iter().any(|&i| level.e.contains(i)) {
            return Err(Error::NodeSet("A overlaps E".into()));
        }
        let op = &level.op;
        let grid = op.grid();
        let base = super::subharmonic_measure(op, &level.e, opts)?;
        let joined = level.e.union(&level.a, "E∪A");
        let with_a = super::subharmonic_measure(op, &joined, opts)?;
        let dim = grid.dim();
        let a_pts: Vec<Vec<f64>> = level.a.indices().iter().map(|&i| grid.point(i)).collect();
        let mut p = [0.0; MAX_DIM];
        let mut far = |i: usize| {
            grid.point_into(i, &mut p);
            a_pts.iter().all(|q| {
                p[..dim].iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() > exclusion * exclusion
            })
        };
        let (u, v) = (base.omega(), with_a.omega());
        let gap = (0..u.values().len())
            .filter(|&i| op.mask().class(i) != NodeClass::Exterior && far(i))
            .map(|i| (u.get(i) - v.get(i)).abs())
            .fold(0.0, f64::max);
        table.push(grid.h(), gap, order_breach(v, u));
    }
    Ok(table)
}
