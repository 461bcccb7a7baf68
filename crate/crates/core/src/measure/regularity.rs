use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{solve_measure, subharmonic_measure, MeasureKind, WeightSpec};
use crate::envelope::SolveOptions;
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, GridFunction, NodeSet};
use crate::operator::DiscreteOperator;

/// Everything needed to compute measures at one grid resolution.
#[derive(Debug, Clone)]
pub struct RegularityScenario {
    pub op: Arc<DiscreteOperator>,
    pub k: NodeSet,
    pub weight: WeightSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityOptions {
    /// Radii `r` of the local compacts `K ∩ B̄(z₀, r)`.
    pub radii: Vec<f64>,
    /// Mesh sizes, coarse to fine.
    pub h_schedule: Vec<f64>,
    /// The upper regularization at `z₀` is read as the largest value within
    /// `probe_scale · √h` of `z₀`.
    pub probe_scale: f64,
    /// Threshold factor: a gap is small below `eps_factor · h · ‖ψ‖_∞`.
    pub eps_factor: f64,
    /// Also solve for the full compact at every level.
    pub global: bool,
    pub solve: SolveOptions,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions {
            radii: vec![0.5],
            h_schedule: vec![0.25, 0.125, 0.0625],
            probe_scale: 1.0,
            eps_factor: 10.0,
            global: true,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Regular,
    Irregular,
    Inconclusive,
}

/// Gaps at one tested point and one mesh size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLevel {
    pub h: f64,
    pub node: usize,
    pub psi: f64,
    pub probe_radius: f64,
    pub eps_reg: f64,
    /// Gap of the measure of the full compact, when requested.
    pub gap: Option<f64>,
    /// Gap per radius of the local compacts.
    pub local_gaps: Vec<f64>,
    /// Unweighted local gaps (`ψ ≡ -1`), for the weighted/unweighted
    /// cross-check.
    pub unweighted_local_gaps: Vec<f64>,
}

impl PointLevel {
    pub fn worst_local_gap(&self) -> f64 {
        self.local_gaps.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRegularity {
    pub point: Vec<f64>,
    pub levels: Vec<PointLevel>,
    pub classification: Classification,
    /// Classification from the unweighted local measures.
    pub unweighted_classification: Classification,
    /// Both classifications agree.
    pub cross_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub options: RegularityOptions,
    pub points: Vec<PointRegularity>,
}

impl RegularityReport {
    pub fn classification_of(&self, i: usize) -> Classification {
        self.points[i].classification
    }
}

/// Nodes within Euclidean distance `radius` of node `center`.
fn nodes_near(grid: &ComplexGrid, center: usize, radius: f64) -> Vec<usize> {
    let dim = grid.dim();
    let reach = (radius / grid.h() + 1e-9).floor() as i64;
    let r2 = (radius / grid.h()) * (radius / grid.h()) + 1e-9;
    let mut out = Vec::new();
    let mut off = vec![-reach; dim];
    loop {
        let d2: i64 = off.iter().map(|v| v * v).sum();
        if (d2 as f64) <= r2 {
            if let Some(j) = grid.offset(center, &off) {
                out.push(j);
            }
        }
        let mut a = 0;
        loop {
            if a == dim {
                return out;
            }
            off[a] += 1;
            if off[a] <= reach {
                break;
            }
            off[a] = -reach;
            a += 1;
        }
    }
}

/// `max_{|z - z₀| ≤ δ} u(z) - ψ(z₀)`.
fn probe_gap(u: &GridFunction, node: usize, radius: f64, psi: f64) -> f64 {
    nodes_near(u.grid(), node, radius)
        .into_iter()
        .map(|j| u.get(j))
        .fold(f64::NEG_INFINITY, f64::max)
        - psi
}

/// Regular when the finest gap is below `eps_reg` without growing from
/// the coarsest level; irregular when it stays above and never decreases.
fn classify(gaps: &[f64], eps: &[f64]) -> Classification {
    let (Some(&last), Some(&first)) = (gaps.last(), gaps.first()) else {
        return Classification::Inconclusive;
    };
    let eps_last = *eps.last().unwrap();
    if last <= eps_last && last <= first + 1e-9 {
        Classification::Regular
    } else if last > eps_last && gaps.len() > 1 && gaps.windows(2).all(|w| w[1] >= w[0] - 1e-9) {
        Classification::Irregular
    } else {
        Classification::Inconclusive
    }
}

/// Refinement study of the regularity of `K` at `points`.
///
/// At each mesh size the scenario is rebuilt by `build`. For each point
/// `z₀` (snapped to the nearest node, which must lie in `K`) and radius `r`
/// the measure of `K ∩ B̄(z₀, r)` is computed, and its upper regularization
/// at `z₀` is compared with `ψ(z₀)`. A point is classified by the trend of
/// the largest local gap over the levels.
pub fn regularity_report(
    build: impl Fn(f64) -> Result<RegularityScenario>,
    points: &[Vec<f64>],
    opts: &RegularityOptions,
) -> Result<RegularityReport> {
    if opts.h_schedule.is_empty() || opts.radii.is_empty() {
        return Err(Error::input("regularity study needs mesh sizes and radii"));
    }
    let mut per_point: Vec<Vec<PointLevel>> = vec![Vec::new(); points.len()];
    for &h in &opts.h_schedule {
        let sc = build(h)?;
        let grid = sc.op.grid().clone();
        sc.weight.validate(&sc.op, &sc.k)?;
        let psi_norm = sc.weight.inf_on(&sc.k).abs().max(sc.weight.sup_on(&sc.k).abs());
        let eps_reg = opts.eps_factor * grid.h() * psi_norm;
        let delta = opts.probe_scale * grid.h().sqrt();
        let constant = sc.weight.constant_value();
        let global = if opts.global {
            Some(solve_measure(&sc.op, &sc.k, &sc.weight, MeasureKind::Weighted, &opts.solve)?)
        } else {
            None
        };
        for (pi, z0) in points.iter().enumerate() {
            let node = grid.nearest_node(z0);
            if !sc.k.contains(node) {
                return Err(Error::NodeSet(format!("point {z0:?} is not a node of K")));
            }
            let psi = sc.weight.psi(node);
            let zc = grid.point(node);
            let mut local_gaps = Vec::new();
            let mut unweighted = Vec::new();
            for &r in &opts.radii {
                let kl = sc.k.within_ball(&grid, &zc, r, format!("K∩B({r})"));
                let f = solve_measure(&sc.op, &kl, &sc.weight, MeasureKind::Weighted, &opts.solve)?;
                let g = probe_gap(f.omega(), node, delta, psi);
                local_gaps.push(g);
                unweighted.push(match constant {
                    Some(c) => g / -c,
                    None => {
                        let fu = subharmonic_measure(&sc.op, &kl, &opts.solve)?;
                        probe_gap(fu.omega(), node, delta, -1.0)
                    }
                });
            }
            per_point[pi].push(PointLevel {
                h: grid.h(),
                node,
                psi,
                probe_radius: delta,
                eps_reg,
                gap: global.as_ref().map(|f| probe_gap(f.omega(), node, delta, psi)),
                local_gaps,
                unweighted_local_gaps: unweighted,
            });
        }
    }
    let points = points
        .iter()
        .zip(per_point)
        .map(|(z0, levels)| {
            let gaps: Vec<f64> = levels.iter().map(PointLevel::worst_local_gap).collect();
            let eps: Vec<f64> = levels.iter().map(|l| l.eps_reg).collect();
            let ugaps: Vec<f64> = levels
                .iter()
                .map(|l| l.unweighted_local_gaps.iter().copied().fold(0.0, f64::max))
                .collect();
            let ueps: Vec<f64> = levels.iter().map(|l| opts.eps_factor * l.h).collect();
            let classification = classify(&gaps, &eps);
            let unweighted_classification = classify(&ugaps, &ueps);
            PointRegularity {
                point: z0.clone(),
                levels,
                classification,
                unweighted_classification,
                cross_check: classification == unweighted_classification,
            }
        })
        .collect();
    Ok(RegularityReport {
        options: opts.clone(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn nodes_near_counts_lattice_points() {
        let g = build_grid(1, &[9, 9], 0.25, &[-1.0, -1.0]).unwrap();
        let c = g.nearest_node(&[0.0, 0.0]);
        assert_eq!(nodes_near(&g, c, 0.25).len(), 5);
        assert_eq!(nodes_near(&g, c, 0.25 * 2f64.sqrt()).len(), 9);
        assert_eq!(nodes_near(&g, c, 0.5).len(), 13);
    }

    #[test]
    fn classify_trends() {
        let eps = [2.5, 1.25, 0.625];
        assert_eq!(classify(&[0.76, 0.6, 0.55], &eps), Classification::Regular);
        assert_eq!(classify(&[0.96, 0.98, 0.99], &eps), Classification::Irregular);
        assert_eq!(classify(&[0.96, 0.7, 0.8], &eps), Classification::Inconclusive);
        assert_eq!(classify(&[0.0, 0.0, 0.0], &eps), Classification::Regular);
    }
}
