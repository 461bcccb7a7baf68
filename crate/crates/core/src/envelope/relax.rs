use rayon::prelude::*;

use super::{SolveOptions, SweepOrder};
use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct SweepStats {
    pub iterations: usize,
    pub update: f64,
    pub residual: f64,
    pub max_increase: f64,
}

/// Interior positions that solvers update, split into colour classes whose
/// members never appear in each other's stencils.
pub(crate) struct Schedule {
    pub classes: Vec<Vec<usize>>,
    pub sequential: bool,
}

impl Schedule {
    pub fn new(op: &DiscreteOperator, free: &[usize], order: SweepOrder) -> Self {
        match order {
            SweepOrder::Lexicographic => Schedule {
                classes: vec![free.to_vec()],
                sequential: true,
            },
            SweepOrder::TwoColor => {
                let grid = op.grid();
                let dim = grid.dim();
                let interior = op.mask().interior();
                // mixed terms couple diagonal neighbours: colour by the parity
                // vector instead of the parity sum
                let cross = op.has_cross_terms();
                let count = if cross { 1 << dim } else { 2 };
                let mut classes = vec![Vec::new(); count];
                for &p in free {
                    let lat = grid.lattice(interior[p]);
                    let c = if cross {
                        (0..dim).map(|a| (lat[a] & 1) << a).sum::<usize>()
                    } else {
                        (0..dim).map(|a| lat[a]).sum::<usize>() & 1
                    };
                    classes[c].push(p);
                }
                classes.retain(|c| !c.is_empty());
                Schedule {
                    classes,
                    sequential: false,
                }
            }
        }
    }
}

#[inline]
fn relaxed(op: &DiscreteOperator, u: &[f64], upper: Option<&[f64]>, omega: f64, p: usize, i: usize) -> f64 {
    let s = op.stencil(p);
    let gs = -s.neighbour_sum(u, i) / s.center;
    let old = u[i];
    let new = old + omega * (gs - old);
    match upper {
        Some(phi) => new.min(phi[i]),
        None => new,
    }
}

/// Complementarity residual: `|L u| / |c|` where `u < upper - 1e-9`,
/// `max(-L u / |c|, 0)` on the contact set.
pub(crate) fn complementarity_residual(
    op: &DiscreteOperator,
    u: &[f64],
    upper: Option<&[f64]>,
    free: &[usize],
) -> f64 {
    let interior = op.mask().interior();
    free.par_iter()
        .map(|&p| {
            let i = interior[p];
            let r = op.normalized_residual(u, p);
            match upper {
                Some(phi) if u[i] >= phi[i] - 1e-9 => (-r).max(0.0),
                _ => r.abs(),
            }
        })
        .reduce(|| 0.0, f64::max)
}

/// Projected successive over-relaxation on the positions of `sched`:
/// `u ← min(upper, u + ω (GS(u) - u))`. Stops once the sup-norm update
/// and the complementarity residual are both below `opts.tol`.
pub(crate) fn relax(
    op: &DiscreteOperator,
    u: &mut [f64],
    upper: Option<&[f64]>,
    free: &[usize],
    sched: &Schedule,
    opts: &SolveOptions,
) -> Result<SweepStats> {
    let interior = op.mask().interior();
    let omega = opts.relaxation.unwrap_or(1.0);
    let mut stats = SweepStats::default();
    if free.is_empty() {
        return Ok(stats);
    }
    let mut buf: Vec<f64> = Vec::new();
    for sweep in 1..=opts.max_sweeps {
        let mut update = 0.0_f64;
        let mut increase = 0.0_f64;
        if sched.sequential {
            for &p in &sched.classes[0] {
                let i = interior[p];
                let new = relaxed(op, u, upper, omega, p, i);
                let d = new - u[i];
                update = update.max(d.abs());
                increase = increase.max(d);
                u[i] = new;
            }
        } else {
            for class in &sched.classes {
                let frozen: &[f64] = u;
                class
                    .par_iter()
                    .map(|&p| relaxed(op, frozen, upper, omega, p, interior[p]))
                    .collect_into_vec(&mut buf);
                for (k, &p) in class.iter().enumerate() {
                    let i = interior[p];
                    let d = buf[k] - u[i];
                    update = update.max(d.abs());
                    increase = increase.max(d);
                    u[i] = buf[k];
                }
            }
        }
        stats.iterations = sweep;
        stats.update = update;
        stats.max_increase = stats.max_increase.max(increase);
        if !update.is_finite() {
            break;
        }
        if update < opts.tol {
            stats.residual = complementarity_residual(op, u, upper, free);
            if stats.residual < opts.tol {
                return Ok(stats);
            }
        }
    }
    stats.residual = complementarity_residual(op, u, upper, free);
    Err(Error::NonConvergence {
        iterations: stats.iterations,
        update: stats.update,
        residual: stats.residual,
    })
}
