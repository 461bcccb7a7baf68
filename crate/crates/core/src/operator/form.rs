use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Largest tolerated `|a_jk - conj(a_kj)|`.
pub const HERMITIAN_TOL: f64 = 1e-14;
/// Smallest admissible eigenvalue of the coefficient matrix.
pub const DEFAULT_PD_EPS: f64 = 1e-9;

/// Hermitian `n × n` coefficients (`n ≤ 2`). For `n = 1` only `a11` is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coeffs {
    pub a11: f64,
    pub a22: f64,
    pub a12: Complex64,
}

impl Coeffs {
    pub fn scalar(a: f64) -> Self {
        Coeffs {
            a11: a,
            a22: 0.0,
            a12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Coeffs {
            a11,
            a22,
            a12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn identity(n: usize) -> Self {
        if n == 1 {
            Self::scalar(1.0)
        } else {
            Self::diag(1.0, 1.0)
        }
    }

    /// Reads the upper triangle of a full complex matrix after checking
    /// that it is Hermitian. `node` only labels the error.
    pub fn from_matrix(n: usize, m: &[Vec<Complex64>], node: usize) -> Result<Self> {
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(Error::input(format!("coefficient matrix must be {n}x{n}")));
        }
        let mut defect = 0.0_f64;
        for j in 0..n {
            for k in 0..n {
                defect = defect.max((m[j][k] - m[k][j].conj()).norm());
            }
        }
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { node, defect });
        }
        Ok(if n == 1 {
            Self::scalar(m[0][0].re)
        } else {
            Coeffs {
                a11: m[0][0].re,
                a22: m[1][1].re,
                a12: m[0][1],
            }
        })
    }

    pub fn min_eigenvalue(&self, n: usize) -> f64 {
        if n == 1 {
            return self.a11;
        }
        let mean = 0.5 * (self.a11 + self.a22);
        let half = 0.5 * (self.a11 - self.a22);
        mean - (half * half + self.a12.norm_sqr()).sqrt()
    }

    fn scaled(&self, c: f64) -> Self {
        Coeffs {
            a11: c * self.a11,
            a22: c * self.a22,
            a12: self.a12 * c,
        }
    }

    /// Real second-order coefficients `B` with `Σ a_jk ∂²u/∂z_j∂z̄_k =
    /// Σ_pq B_pq ∂²u/∂x_p∂x_q` over the real axes `x1, y1[, x2, y2]`.
    pub fn real_matrix(&self, n: usize) -> [[f64; 4]; 4] {
        let mut b = [[0.0; 4]; 4];
        b[0][0] = 0.25 * self.a11;
        b[1][1] = 0.25 * self.a11;
        if n == 2 {
            b[2][2] = 0.25 * self.a22;
            b[3][3] = 0.25 * self.a22;
            let (re, im) = (0.25 * self.a12.re, 0.25 * self.a12.im);
            b[0][2] = re;
            b[1][3] = re;
            b[0][3] = -im;
            b[1][2] = im;
            for p in 0..4 {
                for q in 0..p {
                    b[p][q] = b[q][p];
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoeffField {
    Constant(Coeffs),
    /// One entry per grid node.
    PerNode(Vec<Coeffs>),
}

/// Effective coefficients `a_jk(x)` of `Δ_α u = scale · Σ a_jk ∂²u/∂z_j∂z̄_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaForm {
    n: usize,
    field: CoeffField,
    scale: f64,
}

impl AlphaForm {
    pub fn constant(n: usize, a: Coeffs) -> Result<Self> {
        Self::new(n, CoeffField::Constant(a), 1.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(n, Coeffs::identity(n)).expect("identity is positive definite")
    }

    pub fn new(n: usize, field: CoeffField, scale: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::input(format!("scale must be positive, got {scale}")));
        }
        let check = |node: usize, c: &Coeffs| -> Result<()> {
            let lam = c.min_eigenvalue(n);
            if !(lam >= DEFAULT_PD_EPS) {
                return Err(Error::NotPositiveDefinite {
                    node,
                    min_eigenvalue: lam,
                });
            }
            Ok(())
        };
        match &field {
            CoeffField::Constant(c) => check(0, c)?,
            CoeffField::PerNode(v) => {
                for (i, c) in v.iter().enumerate() {
                    check(i, c)?;
                }
            }
        }
        Ok(AlphaForm { n, field, scale })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::input(format!("scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn field(&self) -> &CoeffField {
        &self.field
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.field, CoeffField::Constant(_))
    }

    /// Coefficients at `node`, including the global scale.
    pub fn at(&self, node: usize) -> Coeffs {
        let c = match &self.field {
            CoeffField::Constant(c) => c,
            CoeffField::PerNode(v) => &v[node],
        };
        c.scaled(self.scale)
    }

    pub fn check_grid(&self, grid: &ComplexGrid) -> Result<()> {
        if grid.n() != self.n {
            return Err(Error::GridMismatch(format!(
                "form is for n = {}, grid has n = {}",
                self.n,
                grid.n()
            )));
        }
        if let CoeffField::PerNode(v) = &self.field {
            if v.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "{} coefficient rows for {} nodes",
                    v.len(),
                    grid.len()
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients `c_jk` of a form `α = (i/2) Σ c_jk dz_j ∧ dz̄_k` (`n = 2`),
/// or the scalar function `c` (`n = 1`).
#[derive(Debug, Clone, PartialEq)]
pub enum PrintedForm {
    Constant(Vec<Vec<Complex64>>),
    PerNode(Vec<Vec<Vec<Complex64>>>),
}

/// Operator coefficients of `dd^c u ∧ α`. For `n = 2`, wedging
/// `u_{jk̄} dz_j ∧ dz̄_k` against `c_lm dz_l ∧ dz̄_m` leaves a volume form only
/// when `{j,l} = {k,m} = {1,2}`, which gives the cofactor matrix:
/// `a11 = c22`, `a22 = c11`, `a12 = -c21`.
pub fn form_to_effective_coeffs(printed: &PrintedForm, n: usize) -> Result<AlphaForm> {
    let convert = |m: &[Vec<Complex64>], node: usize| -> Result<Coeffs> {
        let c = Coeffs::from_matrix(n, m, node)?;
        Ok(if n == 1 {
            c
        } else {
            Coeffs {
                a11: c.a22,
                a22: c.a11,
                a12: -c.a12.conj(),
            }
        })
    };
    let field = match printed {
        PrintedForm::Constant(m) => CoeffField::Constant(convert(m, 0)?),
        PrintedForm::PerNode(ms) => CoeffField::PerNode(
            ms.iter()
                .enumerate()
                .map(|(i, m)| convert(m, i))
                .collect::<Result<_>>()?,
        ),
    };
    AlphaForm::new(n, field, 1.0)
}

/// Reads per-node effective coefficients from CSV rows
/// `index,a11_re` (`n = 1`) or `index,a11_re,a12_re,a12_im,a22_re` (`n = 2`).
pub fn read_coeff_csv(path: &Path, grid: &ComplexGrid) -> Result<AlphaForm> {
    let n = grid.n();
    let expected = if n == 1 {
        "index,a11_re"
    } else {
        "index,a11_re,a12_re,a12_im,a22_re"
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let head = lines.next().transpose()?.unwrap_or_default();
    if head.trim() != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {expected:?}"),
        });
    }
    let mut rows: Vec<Option<Coeffs>> = vec![None; grid.len()];
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: ln + 2, msg };
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        if vals.len() != if n == 1 { 2 } else { 5 } {
            return Err(err("wrong column count".into()));
        }
        let idx = vals[0] as usize;
        if vals[0] != idx as f64 || idx >= grid.len() {
            return Err(err(format!("bad node index {}", vals[0])));
        }
        rows[idx] = Some(if n == 1 {
            Coeffs::scalar(vals[1])
        } else {
            Coeffs {
                a11: vals[1],
                a12: Complex64::new(vals[2], vals[3]),
                a22: vals[4],
            }
        });
    }
    let field = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or(Error::Parse {
                line: 0,
                msg: format!("missing coefficients for node {i}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AlphaForm::new(n, CoeffField::PerNode(field), 1.0)
}
