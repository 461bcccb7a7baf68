use std::collections::HashMap;
use std::sync::Arc;

use super::{assemble_operator, DiscreteOperator};
use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridFunction};
use crate::linalg::BandedMatrix;

/// Discrete harmonic measure of each boundary node of a small ball, seen
/// from each of its interior nodes.
#[derive(Debug, Clone)]
pub struct DiscretePoissonKernel {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    /// `weights[r][c]`: weight of `boundary[c]` seen from `interior[r]`.
    pub weights: Vec<Vec<f64>>,
}

impl DiscretePoissonKernel {
    pub fn row(&self, node: usize) -> Option<&[f64]> {
        self.interior
            .binary_search(&node)
            .ok()
            .map(|r| self.weights[r].as_slice())
    }

    /// `Σ_ξ P(z, ξ) u(ξ)` for the `r`-th interior node.
    pub fn boundary_average(&self, r: usize, u: &GridFunction) -> f64 {
        self.weights[r]
            .iter()
            .zip(&self.boundary)
            .map(|(w, &b)| w * u.get(b))
            .sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_row_sum_defect(&self) -> f64 {
        self.weights
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `L_h v = 0` in the ball with `v` the indicator of each boundary
/// node, by one banded factorization shared across all boundary nodes.
/// The ball operator uses the coefficients of `op` on node-snapped arms.
pub fn poisson_kernel(op: &DiscreteOperator, ball: &DomainMask) -> Result<DiscretePoissonKernel> {
    if **ball.grid() != **op.grid() {
        return Err(Error::GridMismatch("ball lives on a different grid".into()));
    }
    if !ball.interior_subset_of(op.mask()) {
        return Err(Error::input("ball interior must lie inside the operator's interior"));
    }
    let ball_op = assemble_operator(op.alpha(), &Arc::new(ball.snapped()))?;
    let interior = ball.interior().to_vec();
    let boundary = ball.boundary_nodes();
    let rank: HashMap<usize, usize> = interior.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let brank: HashMap<usize, usize> = boundary.iter().enumerate().map(|(r, &i)| (i, r)).collect();

    let mut bw = 0;
    for (p, &i) in interior.iter().enumerate() {
        for &(off, _) in &ball_op.stencil(p).entries {
            let j = (i as isize + off) as usize;
            if let Some(&q) = rank.get(&j) {
                bw = bw.max(p.abs_diff(q));
            }
        }
    }
    let mut a = BandedMatrix::zeros(interior.len(), bw);
    let mut coupling = vec![Vec::<(usize, f64)>::new(); boundary.len()];
    for (p, &i) in interior.iter().enumerate() {
        let s = ball_op.stencil(p);
        a.add(p, p, s.center);
        for &(off, w) in &s.entries {
            let j = (i as isize + off) as usize;
            if let Some(&q) = rank.get(&j) {
                a.add(p, q, w);
            } else if let Some(&c) = brank.get(&j) {
                coupling[c].push((p, w));
            } else {
                return Err(Error::input(format!("stencil of node {i} leaves the ball")));
            }
        }
    }
    let lu = a.factor()?;
    let mut weights = vec![vec![0.0; boundary.len()]; interior.len()];
    let mut rhs = vec![0.0; interior.len()];
    for (c, col) in coupling.iter().enumerate() {
        if col.is_empty() {
            continue;
        }
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for &(p, w) in col {
            rhs[p] -= w;
        }
        let v = lu.solve(&rhs);
        for (r, x) in v.into_iter().enumerate() {
            weights[r][c] = x;
        }
    }
    Ok(DiscretePoissonKernel {
        interior,
        boundary,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmeanReport {
    pub holds: bool,
    /// Largest `u(z) - Σ P(z, ξ) u(ξ)` over the ball's interior nodes.
    pub max_violation: f64,
    pub node: usize,
}

/// `u(z) ≤ Σ_ξ P(z, ξ) u(ξ) + tol` at every interior node of the ball.
pub fn submean_check(u: &GridFunction, kernel: &DiscretePoissonKernel, tol: f64) -> SubmeanReport {
    let mut worst = f64::NEG_INFINITY;
    let mut node = kernel.interior[0];
    for (r, &z) in kernel.interior.iter().enumerate() {
        let gap = u.get(z) - kernel.boundary_average(r, u);
        if gap > worst {
            worst = gap;
            node = z;
        }
    }
    SubmeanReport {
        holds: worst <= tol,
        max_violation: worst,
        node,
    }
}
