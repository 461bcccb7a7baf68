use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("complex dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {nodes} nodes, exceeding the node budget of {budget}")]
    NodeBudget { nodes: usize, budget: usize },

    #[error("empty interior")]
    EmptyInterior,

    #[error("shape does not fit inside the grid: {0}")]
    ShapeOutsideGrid(String),

    #[error("node set error: {0}")]
    NodeSet(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("coefficients are not Hermitian at node {node} (defect {defect:.3e})")]
    NotHermitian { node: usize, defect: f64 },

    #[error("coefficients are not positive definite at node {node} (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { node: usize, min_eigenvalue: f64 },

    #[error(
        "stencil is not of positive type at node {node}: off-diagonal dominance ratio {ratio:.4} > 1"
    )]
    PositiveType { node: usize, ratio: f64 },

    #[error("solver did not converge after {iterations} sweeps (last update {update:.3e}, residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        update: f64,
        residual: f64,
    },

    #[error("singular system at unknown {0}")]
    Singular(usize),

    #[error("weight must be strictly negative on K (sup = {0})")]
    WeightNotNegative(f64),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
