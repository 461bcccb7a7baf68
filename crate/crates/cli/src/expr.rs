//! Closed-form weight extensions. Only the whitelisted families below are
//! accepted, so every ψ̃ in a scenario file is auditable.

use serde::{Deserialize, Serialize};

/// `z` is read in real coordinates `(x1, y1[, x2, y2])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    /// `constant + Σ coefficients[a] · x_a`.
    Affine { constant: f64, coefficients: Vec<f64> },
    /// `scale · |z|² + offset`.
    NormSq { scale: f64, offset: f64 },
    /// `scale · |z_j|² + offset`, `j` counted from 1.
    CoordNormSq { j: usize, scale: f64, offset: f64 },
    /// `scale · |z|^power + offset`.
    RadialPower { power: f64, scale: f64, offset: f64 },
}

impl Expr {
    pub fn validate(&self, n: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Expr::Affine { constant, coefficients } => {
                if coefficients.len() != 2 * n {
                    errs.push(format!("affine weight needs {} coefficients, got {}", 2 * n, coefficients.len()));
                }
                if !finite(coefficients) || !constant.is_finite() {
                    errs.push("affine weight coefficients must be finite".into());
                }
            }
            Expr::NormSq { scale, offset } => {
                if !finite(&[*scale, *offset]) {
                    errs.push("norm_sq weight parameters must be finite".into());
                }
            }
            Expr::CoordNormSq { j, scale, offset } => {
                if *j == 0 || *j > n {
                    errs.push(format!("coord_norm_sq index j must lie in 1..={n}, got {j}"));
                }
                if !finite(&[*scale, *offset]) {
                    errs.push("coord_norm_sq weight parameters must be finite".into());
                }
            }
            Expr::RadialPower { power, scale, offset } => {
                if !(*power > 0.0) || !power.is_finite() {
                    errs.push(format!("radial_power exponent must be positive, got {power}"));
                }
                if !finite(&[*scale, *offset]) {
                    errs.push("radial_power weight parameters must be finite".into());
                }
            }
        }
        errs
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        match self {
            Expr::Affine { constant, coefficients } => {
                constant + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            Expr::NormSq { scale, offset } => scale * norm2(x) + offset,
            Expr::CoordNormSq { j, scale, offset } => scale * norm2(&x[2 * (j - 1)..2 * j]) + offset,
            Expr::RadialPower { power, scale, offset } => scale * norm2(x).sqrt().powf(*power) + offset,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Expr::Affine { constant, coefficients } => format!("{constant} + {coefficients:?}·x"),
            Expr::NormSq { scale, offset } => format!("{scale}|z|^2 + {offset}"),
            Expr::CoordNormSq { j, scale, offset } => format!("{scale}|z_{j}|^2 + {offset}"),
            Expr::RadialPower { power, scale, offset } => format!("{scale}|z|^{power} + {offset}"),
        }
    }
}
