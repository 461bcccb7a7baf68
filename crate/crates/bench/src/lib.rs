//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use alpha_measure::grid::{classify_domain, ComplexGrid, DomainSpec, NodeSet, Shape};
use alpha_measure::operator::{assemble_operator, AlphaForm, DiscreteOperator};

/// Unit ball in `ℂⁿ` with cut cells, one spare node layer around it.
pub fn ball_operator(n: usize, h: f64) -> Arc<DiscreteOperator> {
    let grid = ComplexGrid::centered(n, 1.0 + 2.0 * h, h, 4_000_000).expect("grid within budget");
    let mask = classify_domain(&grid, &DomainSpec::shape(Shape::origin_ball(2 * n, 1.0))).expect("ball fits the grid");
    Arc::new(assemble_operator(&AlphaForm::identity(n), &Arc::new(mask)).expect("identity is positive type"))
}

/// Closed ball of radius `r` about the origin as the compact.
pub fn centered_compact(op: &DiscreteOperator, r: f64) -> NodeSet {
    NodeSet::from_shape(op.mask(), &Shape::origin_ball(op.grid().dim(), r), "K")
}
