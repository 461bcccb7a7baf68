//! α-subharmonic and weighted (α,ψ)-subharmonic measures, the inequalities
//! they satisfy, regularity classification by refinement, and convergence
//! drivers for sequences of compacts and domains.
//!
//! A measure is the Perron envelope of the obstacle equal to `ψ` on `K`
//! and `0` elsewhere. The unweighted measure uses `ψ ≡ -1`.

mod experiments;
mod hartogs;
mod regularity;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{perron_envelope, EnvelopeResult, Obstacle, SolveOptions};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, DomainMask, GridFunction, NodeClass, NodeSet};
use crate::operator::{default_tolerance, is_alpha_subharmonic, DiscreteOperator};

pub use experiments::{
    decreasing_compacts_experiment, exhaustion_experiment, increasing_domains_experiment,
    polar_union_experiment, ConvergenceRow, ConvergenceTable, PolarLevel,
};
pub use hartogs::{hartogs_harness, HartogsCertificate, HartogsRow};
pub use regularity::{
    regularity_report, Classification, PointLevel, PointRegularity, RegularityOptions, RegularityReport,
    RegularityScenario,
};

/// Tolerance of the pointwise comparison checks.
pub const COMPARE_TOL: f64 = 1e-9;

/// Hölder data of a weight: `|ψ(z') - ψ(z'')| ≤ c |z' - z''|^lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightHolder {
    pub c: f64,
    pub lambda: f64,
}

/// A weight `ψ` on `K` given through an extension `ψ̃` to the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    ext: GridFunction,
    constant: Option<f64>,
    holder: Option<WeightHolder>,
    label: String,
}

impl WeightSpec {
    /// `ψ̃` as given. Checked against an operator and `K` by
    /// [`WeightSpec::validate`].
    pub fn new(ext: GridFunction, label: impl Into<String>) -> Self {
        WeightSpec {
            ext,
            constant: None,
            holder: None,
            label: label.into(),
        }
    }

    pub fn constant(grid: Arc<ComplexGrid>, c: f64) -> Result<Self> {
        if !(c < 0.0) {
            return Err(Error::WeightNotNegative(c));
        }
        Ok(WeightSpec {
            ext: GridFunction::constant(grid, c),
            constant: Some(c),
            holder: Some(WeightHolder { c: 0.0, lambda: 1.0 }),
            label: format!("const({c})"),
        })
    }

    /// `ψ ≡ -1`.
    pub fn unit(grid: Arc<ComplexGrid>) -> Self {
        Self::constant(grid, -1.0).expect("-1 is negative")
    }

    pub fn with_holder(mut self, c: f64, lambda: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) || !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidWeight(format!(
                "Hölder data needs c ≥ 0 and lambda in (0, 1], got c = {c}, lambda = {lambda}"
            )));
        }
        self.holder = Some(WeightHolder { c, lambda });
        Ok(self)
    }

    pub fn extension(&self) -> &GridFunction {
        &self.ext
    }

    pub fn psi(&self, node: usize) -> f64 {
        self.ext.get(node)
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn holder(&self) -> Option<WeightHolder> {
        self.holder
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn inf_on(&self, k: &NodeSet) -> f64 {
        k.indices().iter().map(|&i| self.ext.get(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn sup_on(&self, k: &NodeSet) -> f64 {
        k.indices().iter().map(|&i| self.ext.get(i)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup_K ψ < 0`, `ψ̃ < 0` on the interior, and `ψ̃` discretely
    /// α-subharmonic for the node-snapped variant of `op`.
    pub fn validate(&self, op: &DiscreteOperator, k: &NodeSet) -> Result<()> {
        self.ext.ensure_same_grid(op.grid())?;
        if !k.is_empty() {
            let sup = self.sup_on(k);
            if !(sup < 0.0) {
                return Err(Error::WeightNotNegative(sup));
            }
        }
        if self.constant.is_some() {
            return Ok(());
        }
        let mask = op.mask();
        if let Some(&i) = mask.interior().iter().find(|&&i| !(self.ext.get(i) < 0.0)) {
            return Err(Error::InvalidWeight(format!(
                "extension must be negative on the interior (node {i}: {})",
                self.ext.get(i)
            )));
        }
        let verdict = is_alpha_subharmonic(&self.ext, &op.snapped()?, None)?;
        if !verdict.verdict {
            let (node, r) = verdict.violations[0];
            return Err(Error::InvalidWeight(format!(
                "extension is not α-subharmonic (node {node}, residual {r:.3e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Unweighted,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Preconditions of the inequality do not hold for the input.
    Inapplicable,
}

/// Outcome of a pointwise inequality scan. For applicable checks,
/// `status == Pass` exactly when `max_violation ≤ tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub family: String,
    pub status: CheckStatus,
    pub max_violation: f64,
    pub node: Option<usize>,
    pub tol: f64,
    pub evaluated: usize,
    pub note: String,
}

impl InequalityReport {
    /// Scans `(node, violation)` pairs; positive violations break the
    /// inequality.
    pub fn scan(family: impl Into<String>, tol: f64, items: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut worst = f64::NEG_INFINITY;
        let mut node = None;
        let mut evaluated = 0;
        for (i, v) in items {
            evaluated += 1;
            if v > worst || v.is_nan() {
                worst = if v.is_nan() { f64::INFINITY } else { v };
                node = Some(i);
            }
        }
        if evaluated == 0 {
            worst = 0.0;
        }
        InequalityReport {
            family: family.into(),
            status: if worst <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
            max_violation: worst,
            node,
            tol,
            evaluated,
            note: String::new(),
        }
    }

    pub fn inapplicable(family: impl Into<String>, note: impl Into<String>) -> Self {
        InequalityReport {
            family: family.into(),
            status: CheckStatus::Inapplicable,
            max_violation: 0.0,
            node: None,
            tol: 0.0,
            evaluated: 0,
            note: note.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// The worse of two reports of the same check; the family of `self` is
    /// kept.
    pub fn merge(self, other: InequalityReport) -> Self {
        if other.status == CheckStatus::Inapplicable || self.status == CheckStatus::Inapplicable {
            return if self.status == CheckStatus::Inapplicable { self } else { other };
        }
        let evaluated = self.evaluated + other.evaluated;
        let mut out = if other.max_violation - other.tol > self.max_violation - self.tol {
            InequalityReport {
                family: self.family,
                ..other
            }
        } else {
            self
        };
        out.evaluated = evaluated;
        out
    }
}

/// A computed measure together with the data that produced it.
#[derive(Debug, Clone)]
pub struct MeasureField {
    pub kind: MeasureKind,
    pub k: NodeSet,
    pub weight: WeightSpec,
    /// The operator the measure was requested with (without a hole).
    pub op: Arc<DiscreteOperator>,
    pub envelope: EnvelopeResult,
    /// Sandwich comparison with the unweighted measure of the same `K`,
    /// filled in by [`weighted_measure`].
    pub sandwich: Option<InequalityReport>,
}

impl MeasureField {
    pub fn omega(&self) -> &GridFunction {
        &self.envelope.u
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        self.op.mask()
    }

    pub fn grid(&self) -> &Arc<ComplexGrid> {
        self.op.grid()
    }

    pub fn h(&self) -> f64 {
        self.grid().h()
    }

    /// `inf_K ψ`, or `-1` for the unweighted measure of an empty set.
    pub fn psi_inf(&self) -> f64 {
        if self.k.is_empty() {
            return self.weight.constant_value().unwrap_or(-1.0);
        }
        self.weight.inf_on(&self.k)
    }

    pub fn psi_sup(&self) -> f64 {
        if self.k.is_empty() {
            return self.weight.constant_value().unwrap_or(-1.0);
        }
        self.weight.sup_on(&self.k)
    }

    /// `inf_K ψ - tol ≤ ω ≤ tol` on every grid node.
    pub fn bounds_report(&self) -> InequalityReport {
        let inf = self.psi_inf();
        let u = self.omega();
        let items = (0..u.values().len()).map(|i| {
            let v = u.get(i);
            (i, (inf - v).max(v))
        });
        InequalityReport::scan("measure_bounds", COMPARE_TOL, items)
    }

    /// `|L_h ω| / |center|` on interior nodes off the contact set, solved
    /// with the operator the envelope used.
    pub fn harmonic_residual_report(&self, tol: f64) -> InequalityReport {
        let op = &self.envelope.operator;
        let interior = op.mask().interior();
        let u = self.omega().values();
        let items = (0..interior.len())
            .filter(|&p| {
                let i = interior[p];
                self.envelope.contact.binary_search(&i).is_err() && !op.hole().is_some_and(|k| k.contains(i))
            })
            .map(|p| (interior[p], op.normalized_residual(u, p).abs()));
        InequalityReport::scan("harmonic_off_contact", tol, items)
    }
}

fn solve_measure(
    op: &Arc<DiscreteOperator>,
    k: &NodeSet,
    w: &WeightSpec,
    kind: MeasureKind,
    opts: &SolveOptions,
) -> Result<MeasureField> {
    let obstacle = Obstacle::new(op.mask(), k, w.extension())?;
    let envelope = perron_envelope(op, &obstacle, opts)?;
    Ok(MeasureField {
        kind,
        k: k.clone(),
        weight: w.clone(),
        op: op.clone(),
        envelope,
        sandwich: None,
    })
}

/// The α-subharmonic measure of `K`: the envelope with `ψ ≡ -1`.
/// `K = ∅` gives `ω ≡ 0`.
pub fn subharmonic_measure(op: &Arc<DiscreteOperator>, k: &NodeSet, opts: &SolveOptions) -> Result<MeasureField> {
    let w = WeightSpec::unit(op.grid().clone());
    solve_measure(op, k, &w, MeasureKind::Unweighted, opts)
}

/// The (α,ψ)-subharmonic measure of `K`. Unless `ψ ≡ -1` on `K`, the
/// unweighted measure is solved too and the two-sided comparison stored in
/// [`MeasureField::sandwich`].
pub fn weighted_measure(
    op: &Arc<DiscreteOperator>,
    k: &NodeSet,
    w: &WeightSpec,
    opts: &SolveOptions,
) -> Result<MeasureField> {
    w.validate(op, k)?;
    let mut field = solve_measure(op, k, w, MeasureKind::Weighted, opts)?;
    let unit = k.indices().iter().all(|&i| w.psi(i) == -1.0);
    if !unit && !k.is_empty() {
        let plain = subharmonic_measure(op, k, opts)?;
        field.sandwich = Some(check_connection_bounds(&field, &plain)?);
    }
    Ok(field)
}

fn same_setting(a: &MeasureField, b: &MeasureField) -> bool {
    a.mask().classes() == b.mask().classes() && a.k.indices() == b.k.indices()
}

/// `-inf ψ · ω ≤ ω_ψ ≤ -sup ψ · ω` at every grid node.
pub fn check_connection_bounds(weighted: &MeasureField, unweighted: &MeasureField) -> Result<InequalityReport> {
    if !same_setting(weighted, unweighted) {
        return Err(Error::input("connection bounds need the same mask and K"));
    }
    if unweighted.weight.constant_value() != Some(-1.0) {
        return Err(Error::input("second field must be the unweighted measure"));
    }
    let (inf, sup) = (weighted.psi_inf(), weighted.psi_sup());
    let wu = weighted.omega();
    let uu = unweighted.omega();
    let lower = InequalityReport::scan(
        "connection_lower",
        COMPARE_TOL,
        (0..wu.values().len()).map(|i| (i, -inf * uu.get(i) - wu.get(i))),
    );
    let upper = InequalityReport::scan(
        "connection_upper",
        COMPARE_TOL,
        (0..wu.values().len()).map(|i| (i, wu.get(i) + sup * uu.get(i))),
    );
    let mut out = lower.merge(upper);
    out.family = "connection_bounds".into();
    Ok(out)
}

/// Two-constants bound for `u ≤ r` on `E`, `u ≤ big_r` on the domain:
/// `u ≤ R (1 - ω_ψ / inf ψ) + r ω_ψ / inf ψ`.
///
/// `E` must be the field's compact. The discrete statement is exact when
/// `u` is a subsolution of the operator the field was solved with (on its
/// free nodes) and the bounds hold on every node that operator reads;
/// `slack` widens the tolerance for inputs that are subsolutions only up to
/// discretization error.
pub fn check_two_constants(
    u: &GridFunction,
    e: &NodeSet,
    r: f64,
    big_r: f64,
    field: &MeasureField,
    slack: f64,
) -> Result<InequalityReport> {
    const FAMILY: &str = "two_constants";
    u.ensure_same_grid(field.grid())?;
    if e.indices() != field.k.indices() {
        return Err(Error::input("E must be the compact of the measure field"));
    }
    if e.is_empty() {
        return Ok(InequalityReport::inapplicable(FAMILY, "E is empty"));
    }
    if !(r < big_r) {
        return Ok(InequalityReport::inapplicable(FAMILY, format!("r = {r} is not below R = {big_r}")));
    }
    let mask = field.mask();
    let op = &field.envelope.operator;
    let tol_u = default_tolerance(op, u);
    let interior = mask.interior();
    for (p, &i) in interior.iter().enumerate() {
        if op.hole().is_some_and(|k| k.contains(i)) {
            continue;
        }
        let res = op.stencil(p).apply(u.values(), i);
        if res < -tol_u {
            return Ok(InequalityReport::inapplicable(
                FAMILY,
                format!("u is not α-subharmonic at node {i} (residual {res:.3e})"),
            ));
        }
    }
    let tol_b = COMPARE_TOL * (1.0 + big_r.abs());
    for i in 0..u.values().len() {
        if mask.class(i) != NodeClass::Exterior && u.get(i) > big_r + tol_b {
            return Ok(InequalityReport::inapplicable(FAMILY, format!("u exceeds R at node {i}")));
        }
    }
    if let Some(&i) = e.indices().iter().find(|&&i| u.get(i) > r + tol_b) {
        return Ok(InequalityReport::inapplicable(FAMILY, format!("u exceeds r on E at node {i}")));
    }
    let inf = field.psi_inf();
    let w = field.omega();
    let tol = COMPARE_TOL * (1.0 + big_r.abs() + r.abs()) + slack;
    let items = interior.iter().map(|&i| {
        let t = w.get(i) / inf;
        (i, u.get(i) - (big_r * (1.0 - t) + r * t))
    });
    Ok(InequalityReport::scan(FAMILY, tol, items))
}

/// Convex quadratic `|Mx|² + b·x` with seeded `M` and `b`, shifted and
/// scaled so that its maximum over `k` is `r` and its maximum over the
/// non-exterior nodes stays below `big_r`. Convexity makes it a subsolution
/// of every operator that is exact on quadratics, which holds for
/// node-snapped masks; cut arms are not exact on it.
pub fn seeded_subsolution(rng: &mut impl Rng, op: &DiscreteOperator, k: &NodeSet, r: f64, big_r: f64) -> GridFunction {
    let dim = op.grid().dim();
    let m: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q = GridFunction::from_fn(op.grid().clone(), |x| {
        let mut s = 0.0;
        for row in 0..dim {
            let y: f64 = (0..dim).map(|c| m[row * dim + c] * x[c]).sum();
            s += y * y;
        }
        s + b.iter().zip(x).map(|(p, v)| p * v).sum::<f64>()
    });
    let mask = op.mask();
    let top_k = k.indices().iter().map(|&i| q.get(i)).fold(f64::NEG_INFINITY, f64::max);
    let top_d = (0..q.values().len())
        .filter(|&i| mask.class(i) != NodeClass::Exterior)
        .map(|i| q.get(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let room = 0.95 * (big_r - r);
    let scale = if top_d - top_k > room { room / (top_d - top_k) } else { 1.0 };
    q.map(|v| scale * (v - top_k) + r)
}

/// Two-constants check with bounds `r = -1`, `R = 0` for `count`
/// subsolutions drawn from one ChaCha stream seeded with `seed`. Returns the
/// worst report; any inapplicable draw makes the whole corpus inapplicable.
pub fn two_constants_corpus(field: &MeasureField, count: usize, seed: u64, slack: f64) -> Result<InequalityReport> {
    if count == 0 {
        return Err(Error::input("corpus needs at least one subsolution"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = &field.envelope.operator;
    let mut out: Option<InequalityReport> = None;
    for _ in 0..count {
        let u = seeded_subsolution(&mut rng, op, &field.k, -1.0, 0.0);
        let rep = check_two_constants(&u, &field.k, -1.0, 0.0, field, slack)?;
        out = Some(match out {
            None => rep,
            Some(prev) => prev.merge(rep),
        });
    }
    Ok(out.expect("count is positive").with_note(format!("{count} seeded subsolutions, seed {seed}")))
}

/// Which ordering of two measures to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    /// `K_a ⊂ K_b`, same domain and weight: `ω_b ≤ ω_a`.
    NestedCompacts,
    /// Same `K` and domain, `ψ_a ≤ ψ_b` on `K`: `ω_a ≤ ω_b`.
    OrderedWeights,
    /// `D_a ⊂ D_b`, same `K` and weight: `ω_b ≤ ω_a`.
    NestedDomains,
}

/// Verifies the pointwise ordering implied by `relation` between the
/// measures `a` and `b` at every grid node.
pub fn check_monotonicity(relation: Monotonicity, a: &MeasureField, b: &MeasureField) -> Result<InequalityReport> {
    if **a.grid() != **b.grid() {
        return Err(Error::GridMismatch("measures live on different grids".into()));
    }
    let same_mask = a.mask().classes() == b.mask().classes();
    let same_weight_on = |k: &NodeSet| k.indices().iter().all(|&i| a.weight.psi(i) == b.weight.psi(i));
    let (lower, upper) = match relation {
        Monotonicity::NestedCompacts => {
            if !same_mask {
                return Err(Error::input("nested compacts need the same domain"));
            }
            if !a.k.is_subset_of(&b.k) {
                return Err(Error::input("first compact is not contained in the second"));
            }
            if !same_weight_on(&a.k) {
                return Err(Error::input("nested compacts need the same weight"));
            }
            (b, a)
        }
        Monotonicity::OrderedWeights => {
            if !same_mask || a.k.indices() != b.k.indices() {
                return Err(Error::input("ordered weights need the same domain and compact"));
            }
            if let Some(&i) = a.k.indices().iter().find(|&&i| a.weight.psi(i) > b.weight.psi(i)) {
                return Err(Error::input(format!("weights are not ordered at node {i}")));
            }
            (a, b)
        }
        Monotonicity::NestedDomains => {
            if !a.mask().interior_subset_of(b.mask()) {
                return Err(Error::input("first domain is not contained in the second"));
            }
            if a.k.indices() != b.k.indices() || !same_weight_on(&a.k) {
                return Err(Error::input("nested domains need the same compact and weight"));
            }
            (b, a)
        }
    };
    let (lo, up) = (lower.omega(), upper.omega());
    let family = match relation {
        Monotonicity::NestedCompacts => "monotone_compacts",
        Monotonicity::OrderedWeights => "monotone_weights",
        Monotonicity::NestedDomains => "monotone_domains",
    };
    Ok(InequalityReport::scan(
        family,
        COMPARE_TOL,
        (0..lo.values().len()).map(|i| (i, lo.get(i) - up.get(i))),
    ))
}

/// Finite subadditivity: `Σ ω(·, E_j) ≤ ω(·, ∪ E_j)` for unweighted
/// measures on one domain.
pub fn check_subadditivity(union: &MeasureField, parts: &[MeasureField]) -> Result<InequalityReport> {
    let mut covered = NodeSet::empty("parts");
    for p in parts {
        if p.mask().classes() != union.mask().classes() {
            return Err(Error::input("parts must share the domain of the union"));
        }
        covered = covered.union(&p.k, "parts");
    }
    if covered.indices() != union.k.indices() {
        return Err(Error::input("parts do not cover the union exactly"));
    }
    let u = union.omega();
    Ok(InequalityReport::scan(
        "subadditivity",
        COMPARE_TOL,
        (0..u.values().len()).map(|i| (i, parts.iter().map(|p| p.omega().get(i)).sum::<f64>() - u.get(i))),
    ))
}

/// Interior nodes with an axis neighbour outside the interior.
pub fn outer_ring(mask: &DomainMask) -> Vec<usize> {
    let g = mask.grid();
    mask.interior()
        .iter()
        .copied()
        .filter(|&i| {
            (0..g.dim()).any(|a| {
                let s = g.strides()[a];
                !mask.is_interior(i + s) || !mask.is_interior(i - s)
            })
        })
        .collect()
}

/// Barrier comparison of a measure with an attached defining function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLimitReport {
    pub report: InequalityReport,
    /// `inf_K ψ / max_K ρ`.
    pub c: f64,
    pub ring_max_abs_omega: f64,
    pub ring_bound: f64,
}

/// `C ρ ≤ ω ≤ 0` on the interior with `C = inf_K ψ / max_K ρ`, and the
/// size of `ω` on the outermost interior ring.
pub fn boundary_limit_check(field: &MeasureField) -> Result<BoundaryLimitReport> {
    let mask = field.mask();
    let rho = mask
        .barrier()
        .ok_or_else(|| Error::input("the domain carries no barrier function"))?;
    let w = field.omega();
    let ring = outer_ring(mask);
    let ring_max_abs_omega = w.max_abs_on(ring.iter().copied());
    if field.k.is_empty() {
        let report = InequalityReport::scan(
            "barrier_bound",
            COMPARE_TOL,
            mask.interior().iter().map(|&i| (i, w.get(i).abs())),
        );
        return Ok(BoundaryLimitReport {
            report,
            c: 0.0,
            ring_max_abs_omega,
            ring_bound: 0.0,
        });
    }
    let rho_max = field.k.indices().iter().map(|&i| rho.get(i)).fold(f64::NEG_INFINITY, f64::max);
    let c = field.psi_inf() / rho_max;
    let report = InequalityReport::scan(
        "barrier_bound",
        COMPARE_TOL,
        mask.interior().iter().map(|&i| {
            let v = w.get(i);
            (i, (c * rho.get(i) - v).max(v))
        }),
    );
    let ring_bound = c.abs() * rho.max_abs_on(ring.iter().copied());
    Ok(BoundaryLimitReport {
        report,
        c,
        ring_max_abs_omega,
        ring_bound,
    })
}
