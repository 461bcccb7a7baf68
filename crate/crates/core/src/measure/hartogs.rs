use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, NodeSet};
use crate::operator::{is_alpha_subharmonic, DiscreteOperator};

/// Excess of one member of the sequence over `g` on `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HartogsRow {
    pub j: usize,
    /// `max_K (u_j - g)`.
    pub max_excess: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HartogsCertificate {
    /// Least `j₀` with `u_j ≤ g + ε` on `K` for all `j₀ ≤ j ≤ j_max`.
    pub j0: Option<usize>,
    pub j_max: usize,
    pub eps: f64,
    pub rows: Vec<HartogsRow>,
}

impl HartogsCertificate {
    pub fn decided(&self) -> Result<usize> {
        self.j0.ok_or_else(|| Error::input(format!("undecided at j_max = {}", self.j_max)))
    }

    /// Per-j excesses never increase.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_excess <= w[0].max_excess + 1e-12)
    }
}

/// Generates `u_1, …, u_{j_max}` lazily and finds the least `j₀` from which
/// every member stays below `g + ε` on `K`. Each member must be discretely
/// α-subharmonic for `op` and bounded above by `bound` on the interior.
pub fn hartogs_harness(
    mut generator: impl FnMut(usize) -> Result<GridFunction>,
    j_max: usize,
    bound: f64,
    op: &DiscreteOperator,
    g: &GridFunction,
    k: &NodeSet,
    eps: f64,
) -> Result<HartogsCertificate> {
    if j_max == 0 || k.is_empty() {
        return Err(Error::input("need j_max ≥ 1 and a nonempty K"));
    }
    g.ensure_same_grid(op.grid())?;
    let mut rows = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let u = generator(j)?;
        u.ensure_same_grid(op.grid())?;
        let verdict = is_alpha_subharmonic(&u, op, None)?;
        if !verdict.verdict {
            return Err(Error::input(format!("member {j} is not α-subharmonic")));
        }
        if let Some(&i) = op.mask().interior().iter().find(|&&i| u.get(i) > bound) {
            return Err(Error::input(format!("member {j} exceeds the declared bound at node {i}")));
        }
        let max_excess = k
            .indices()
            .iter()
            .map(|&i| u.get(i) - g.get(i))
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(HartogsRow {
            j,
            max_excess,
            satisfied: max_excess <= eps,
        });
    }
    let tail = rows.iter().rev().take_while(|r| r.satisfied).count();
    let j0 = (tail > 0).then(|| j_max + 1 - tail);
    Ok(HartogsCertificate { j0, j_max, eps, rows })
}
