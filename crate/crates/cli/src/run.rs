//! Task planning and execution. Solves run first, then checks (in
//! parallel), then fits. Every data artifact is a pure function of the
//! config; only `summary.json` carries timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use alpha_measure::envelope::{dense_oracle_solve, ORACLE_MAX_UNKNOWNS};
use alpha_measure::grid::io::write_mask_csv;
use alpha_measure::grid::Shape;
use alpha_measure::holder::{
    check_near_k_condition, export_fit, fit_holder, global_holder_report, sample_modulus, HolderFit,
    DEFAULT_COLLAR_STEPS,
};
use alpha_measure::measure::{
    boundary_limit_check, check_connection_bounds, subharmonic_measure, two_constants_corpus, weighted_measure,
    ConvergenceTable, InequalityReport, MeasureField,
};
use alpha_measure::operator::DiscreteOperator;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, Task};
use crate::export::{export_field, FieldFormat};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Passed,
    /// The check ran and its inequality failed.
    Failed,
    /// The check could not be applied to this input.
    Inapplicable,
    /// The task raised an error (including solver divergence).
    Error,
    /// A dependency did not produce its output.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: String,
    pub status: TaskStatus,
    pub seconds: f64,
    pub scalars: BTreeMap<String, f64>,
    /// Relative to the output directory.
    pub artifacts: Vec<String>,
    pub message: String,
}

impl TaskRecord {
    fn new(task: &str) -> Self {
        TaskRecord {
            task: task.into(),
            status: TaskStatus::Passed,
            seconds: 0.0,
            scalars: BTreeMap::new(),
            artifacts: Vec::new(),
            message: String::new(),
        }
    }

    fn error(task: &str, msg: impl ToString) -> Self {
        let mut r = Self::new(task);
        r.status = TaskStatus::Error;
        r.message = msg.to_string();
        r
    }

    fn skipped(task: &str, why: &str) -> Self {
        let mut r = Self::new(task);
        r.status = TaskStatus::Skipped;
        r.message = why.into();
        r
    }

    fn scalar(&mut self, key: &str, v: f64) {
        self.scalars.insert(key.into(), v);
    }

    /// Folds a report's outcome into the record.
    fn absorb(&mut self, rep: &InequalityReport) {
        use alpha_measure::measure::CheckStatus;
        let worse = match rep.status {
            CheckStatus::Pass => TaskStatus::Passed,
            CheckStatus::Fail => TaskStatus::Failed,
            CheckStatus::Inapplicable => TaskStatus::Inapplicable,
        };
        if self.status == TaskStatus::Passed {
            self.status = worse;
        }
        self.scalar(&format!("{}.max_violation", rep.family), rep.max_violation);
        if !rep.note.is_empty() {
            if !self.message.is_empty() {
                self.message.push_str("; ");
            }
            self.message.push_str(&rep.note);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub command: String,
    pub tasks: Vec<TaskRecord>,
    pub passed: bool,
}

impl RunSummary {
    fn new(cfg: &ScenarioConfig, command: &str, tasks: Vec<TaskRecord>) -> Self {
        let passed = tasks.iter().all(|t| t.status == TaskStatus::Passed);
        RunSummary {
            name: cfg.name.clone(),
            config_hash: cfg.hash.clone(),
            command: command.into(),
            tasks,
            passed,
        }
    }

    /// Process exit code: 0 exactly when every task passed.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn record(&self, task: &str) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.task == task)
    }

    pub fn write(&self, out: &Path) -> std::io::Result<PathBuf> {
        let p = out.join("summary.json");
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&p, text + "\n")?;
        Ok(p)
    }
}

/// Requested tasks plus their dependencies, in execution order.
pub fn plan(requested: &[Task]) -> Vec<Task> {
    let mut want = std::collections::BTreeSet::new();
    let mut stack: Vec<Task> = requested.to_vec();
    while let Some(t) = stack.pop() {
        if want.insert(t) {
            stack.extend_from_slice(t.dependencies());
        }
    }
    Task::ALL.into_iter().filter(|t| want.contains(t)).collect()
}

/// Human-readable plan for `--dry-run`.
pub fn describe_plan(cfg: &ScenarioConfig, tasks: &[Task], out: &Path) -> String {
    let mut s = format!("scenario {:?} (config sha256 {})\n", cfg.name, cfg.hash);
    s.push_str(&format!("grid: n = {}, h = {:?}\n", cfg.grid.n, cfg.grid.h));
    s.push_str(&format!("output: {}\n", out.display()));
    for (i, t) in plan(tasks).iter().enumerate() {
        let deps: Vec<&str> = t.dependencies().iter().map(|d| d.name()).collect();
        if deps.is_empty() {
            s.push_str(&format!("{}. {}\n", i + 1, t.name()));
        } else {
            s.push_str(&format!("{}. {} (after {})\n", i + 1, t.name(), deps.join(", ")));
        }
    }
    s
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    sc: Scenario,
    op: Arc<DiscreteOperator>,
    out: PathBuf,
}

impl Ctx<'_> {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).display().to_string()
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T, rec: &mut TaskRecord) -> alpha_measure::Result<()> {
        let p = self.out.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&p, serde_json::to_string_pretty(v)? + "\n")?;
        rec.artifacts.push(self.rel(&p));
        Ok(())
    }
}

fn timed(name: &str, f: impl FnOnce(&mut TaskRecord) -> alpha_measure::Result<()>) -> TaskRecord {
    let t0 = Instant::now();
    let mut rec = TaskRecord::new(name);
    if let Err(e) = f(&mut rec) {
        rec.status = TaskStatus::Error;
        rec.message = e.to_string();
    }
    rec.seconds = t0.elapsed().as_secs_f64();
    rec
}

fn solve(ctx: &Ctx, weighted: bool) -> (TaskRecord, Option<MeasureField>) {
    let name = if weighted { "measure" } else { "unweighted" };
    let mut field = None;
    let rec = timed(name, |rec| {
        let f = if weighted && ctx.sc.weight.constant_value() != Some(-1.0) {
            weighted_measure(&ctx.op, &ctx.sc.k, &ctx.sc.weight, &ctx.cfg.solver)?
        } else {
            subharmonic_measure(&ctx.op, &ctx.sc.k, &ctx.cfg.solver)?
        };
        let env = f.envelope.summary();
        rec.scalar("iterations", env.iterations as f64);
        rec.scalar("update", env.update);
        rec.scalar("residual", env.residual);
        rec.scalar("contact_count", env.contact_count as f64);
        rec.scalar("omega_min", f.omega().values().iter().copied().fold(f64::INFINITY, f64::min));
        let stem = ctx.out.join(if weighted { "omega" } else { "omega_unweighted" });
        let mut files = export_field(f.omega(), &stem.with_extension("csv"), FieldFormat::Csv)?;
        files.extend(export_field(f.omega(), &stem, FieldFormat::Raw)?);
        rec.artifacts.extend(files.iter().map(|p| ctx.rel(p)));
        let name = format!("{}.summary.json", stem.file_name().unwrap().to_string_lossy());
        ctx.write_json(&name, &env, rec)?;
        if let Some(sw) = &f.sandwich {
            rec.absorb(sw);
            ctx.write_json("checks/sandwich.json", sw, rec)?;
        }
        field = Some(f);
        Ok(())
    });
    (rec, field)
}

fn check(ctx: &Ctx, task: Task, field: Option<&MeasureField>, unweighted: Option<&MeasureField>) -> TaskRecord {
    let name = task.name();
    timed(name, |rec| {
        let missing = || alpha_measure::Error::InvalidInput("no measure field".into());
        let reports: Vec<InequalityReport> = match task {
            Task::Bounds => vec![field.ok_or_else(missing)?.bounds_report()],
            Task::HarmonicResidual => vec![field.ok_or_else(missing)?.harmonic_residual_report(10.0 * ctx.cfg.solver.tol)],
            Task::Connection => {
                let u = unweighted.ok_or_else(|| alpha_measure::Error::InvalidInput("no unweighted field".into()))?;
                vec![check_connection_bounds(field.ok_or_else(missing)?, u)?]
            }
            Task::Oracle => vec![oracle_report(ctx, field.ok_or_else(missing)?)?],
            Task::TwoConstants => vec![two_constants(ctx)?],
            Task::Barrier => {
                let b = boundary_limit_check(field.ok_or_else(missing)?)?;
                rec.scalar("barrier_c", b.c);
                rec.scalar("ring_max_abs_omega", b.ring_max_abs_omega);
                rec.scalar("ring_bound", b.ring_bound);
                vec![b.report]
            }
            _ => unreachable!("not a check"),
        };
        for r in &reports {
            rec.absorb(r);
        }
        ctx.write_json(&format!("checks/{name}.json"), &reports, rec)
    })
}

fn oracle_report(ctx: &Ctx, field: &MeasureField) -> alpha_measure::Result<InequalityReport> {
    let unknowns = ctx.sc.unknowns();
    if unknowns > ORACLE_MAX_UNKNOWNS {
        return Ok(InequalityReport::inapplicable(
            "oracle",
            format!("{unknowns} unknowns exceed the oracle limit {ORACLE_MAX_UNKNOWNS}"),
        ));
    }
    let direct = dense_oracle_solve(&ctx.op, &ctx.sc.k, ctx.sc.weight.extension())?;
    let (a, b) = (field.omega(), &direct);
    let items = (0..a.values().len()).map(|i| (i, (a.get(i) - b.get(i)).abs()));
    Ok(InequalityReport::scan("oracle", ctx.cfg.checks.oracle_tol, items))
}

/// The corpus runs on the node-snapped variant of the scenario, where the
/// seeded convex quadratics are exact subsolutions.
fn two_constants(ctx: &Ctx) -> alpha_measure::Result<InequalityReport> {
    let op = Arc::new(ctx.op.snapped()?);
    let k = ctx.sc.k.without_geometry();
    let f = if ctx.sc.weight.constant_value() == Some(-1.0) {
        subharmonic_measure(&op, &k, &ctx.cfg.solver)?
    } else {
        weighted_measure(&op, &k, &ctx.sc.weight, &ctx.cfg.solver)?
    };
    let c = &ctx.cfg.checks;
    two_constants_corpus(&f, c.two_constants_count, ctx.cfg.seed, c.two_constants_slack)
}

fn default_region(ctx: &Ctx) -> Option<Shape> {
    ctx.cfg.holder.region.clone().or_else(|| match &ctx.cfg.domain.shape {
        Some(s @ Shape::Ball { .. }) => Some(s.clone()),
        _ => None,
    })
}

fn collar_region(ctx: &Ctx, width: f64) -> Option<Shape> {
    ctx.cfg.holder.collar_region.clone().or_else(|| match ctx.sc.k.geometry() {
        Some(Shape::Ball { center, radius }) => Some(Shape::Shell {
            center: center.clone(),
            inner: *radius,
            outer: radius + width,
        }),
        _ => None,
    })
}

fn holder_task(ctx: &Ctx, field: &MeasureField) -> TaskRecord {
    timed("holder", |rec| {
        let hc = &ctx.cfg.holder;
        let region = default_region(ctx).ok_or_else(|| {
            alpha_measure::Error::InvalidInput("holder.region is required for non-ball domains".into())
        })?;
        let sample = sample_modulus(field.omega(), field.mask(), &region, hc.pair_budget, ctx.cfg.seed)?;
        let fit = fit_holder(&sample)?;
        let (json, csv) = export_fit(&fit, &sample, &ctx.out.join("holder"))?;
        rec.artifacts.push(ctx.rel(&json));
        rec.artifacts.push(ctx.rel(&csv));
        rec.scalar("c_hat", fit.c);
        rec.scalar("lambda_hat", fit.lambda);
        rec.scalar("fit_residual", fit.residual);
        let Some(nk) = &hc.near_k else {
            return Ok(());
        };
        let h = field.h();
        let width = hc.collar_width.unwrap_or(DEFAULT_COLLAR_STEPS * h);
        let near = check_near_k_condition(field.omega(), field.mask(), &ctx.sc.k, &ctx.sc.weight, nk.c, nk.lambda, width)?;
        rec.absorb(&near.report);
        rec.scalar("collar_nodes", near.collar_nodes as f64);
        ctx.write_json("holder.near_k.json", &near, rec)?;
        let collar = collar_region(ctx, width)
            .and_then(|r| sample_modulus(field.omega(), field.mask(), &r, hc.pair_budget, ctx.cfg.seed).ok())
            .and_then(|s| fit_holder(&s).ok())
            .unwrap_or_else(|| HolderFit {
                c: 0.0,
                lambda: 0.0,
                residual: 0.0,
                bins_used: 0,
                samples: 0,
                region: region.clone(),
                degenerate: true,
            });
        if ctx.sc.weight.holder().is_none() {
            rec.message = "weight has no Hölder metadata; exponent relation not checked".into();
            return Ok(());
        }
        let global = global_holder_report(&ctx.sc.weight, &near, &collar, &fit)?;
        rec.scalar("lambda_required", global.required);
        if !global.passed && rec.status == TaskStatus::Passed {
            rec.status = TaskStatus::Failed;
        }
        ctx.write_json("holder.global.json", &global, rec)
    })
}

/// Executes `requested` (plus dependencies) and writes every artifact and
/// `summary.json` into `out`.
pub fn run(cfg: &ScenarioConfig, requested: &[Task], out: &Path, command: &str) -> RunSummary {
    let tasks = plan(requested);
    let records = execute(cfg, &tasks, out);
    let summary = RunSummary::new(cfg, command, records);
    if let Err(e) = summary.write(out) {
        let mut s = summary;
        s.tasks.push(TaskRecord::error("summary", e));
        s.passed = false;
        return s;
    }
    summary
}

fn execute(cfg: &ScenarioConfig, tasks: &[Task], out: &Path) -> Vec<TaskRecord> {
    let fail_all = |msg: String| tasks.iter().map(|t| TaskRecord::error(t.name(), &msg)).collect();
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail_all(format!("cannot create {}: {e}", out.display()));
    }
    let sc = match Scenario::build(cfg) {
        Ok(sc) => sc,
        Err(errs) => return fail_all(errs.join("; ")),
    };
    let t0 = Instant::now();
    let op = match sc.operator() {
        Ok(op) => op,
        Err(e) => return fail_all(format!("operator: {e}")),
    };
    let mut records = Vec::new();
    let mut setup = TaskRecord::new("operator");
    setup.seconds = t0.elapsed().as_secs_f64();
    setup.scalar("interior_nodes", sc.mask.interior().len() as f64);
    setup.scalar("k_nodes", sc.k.len() as f64);
    setup.scalar("max_dominance_ratio", op.max_dominance_ratio());
    let ctx = Ctx {
        cfg,
        sc,
        op,
        out: out.to_path_buf(),
    };
    let mask_path = out.join("mask.csv");
    match write_mask_csv(&ctx.sc.mask, &mask_path) {
        Ok(()) => setup.artifacts.push(ctx.rel(&mask_path)),
        Err(e) => {
            setup.status = TaskStatus::Error;
            setup.message = e.to_string();
        }
    }
    records.push(setup);

    let has = |t: Task| tasks.contains(&t);
    let unit = ctx.sc.weight.constant_value() == Some(-1.0);
    let (m, u) = rayon::join(
        || has(Task::Measure).then(|| solve(&ctx, true)),
        || (has(Task::Unweighted) && !unit).then(|| solve(&ctx, false)),
    );
    let measure = m.and_then(|(rec, f)| {
        records.push(rec);
        f
    });
    let unweighted = if has(Task::Unweighted) && unit {
        let mut r = TaskRecord::new("unweighted");
        r.message = "same as measure for ψ ≡ -1".into();
        records.push(r);
        measure.clone()
    } else {
        u.and_then(|(rec, f)| {
            records.push(rec);
            f
        })
    };

    let checks: Vec<Task> = tasks
        .iter()
        .copied()
        .filter(|t| !matches!(t, Task::Measure | Task::Unweighted | Task::Holder))
        .collect();
    let check_records: Vec<TaskRecord> = checks
        .par_iter()
        .map(|&t| match (&measure, t) {
            // The corpus solves its own snapped variant.
            (_, Task::TwoConstants) => check(&ctx, t, None, None),
            (None, _) => TaskRecord::skipped(t.name(), "measure was not computed"),
            (Some(_), Task::Connection) if unweighted.is_none() => {
                TaskRecord::skipped(t.name(), "unweighted measure was not computed")
            }
            (Some(f), _) => check(&ctx, t, Some(f), unweighted.as_ref()),
        })
        .collect();
    records.extend(check_records);

    if has(Task::Holder) {
        records.push(match &measure {
            Some(f) => holder_task(&ctx, f),
            None => TaskRecord::skipped("holder", "measure was not computed"),
        });
    }
    records
}

/// Solves the scenario at `h, h/2, …, h/2^{levels-1}` and tabulates the
/// sup-norm change of ω between consecutive levels on the coarser level's
/// interior nodes. The table must be monotone.
pub fn refine(cfg: &ScenarioConfig, levels: u32, out: &Path) -> RunSummary {
    let mut records = Vec::new();
    let table = (|| -> Result<ConvergenceTable, String> {
        std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
        let mut table = ConvergenceTable {
            label: format!("{} refinement", cfg.name),
            rows: Vec::new(),
        };
        let mut prev: Option<MeasureField> = None;
        for j in 0..levels {
            let gc = cfg.grid.refined(j);
            let mut rec = TaskRecord::new(&format!("level_{j}"));
            let t0 = Instant::now();
            let sc = Scenario::build_on(cfg, &gc).map_err(|e| e.join("; "))?;
            let op = sc.operator().map_err(|e| e.to_string())?;
            let f = if sc.weight.constant_value() == Some(-1.0) {
                subharmonic_measure(&op, &sc.k, &cfg.solver)
            } else {
                weighted_measure(&op, &sc.k, &sc.weight, &cfg.solver)
            }
            .map_err(|e| e.to_string())?;
            rec.scalar("h", gc.h);
            rec.scalar("iterations", f.envelope.iterations as f64);
            if let Some(p) = &prev {
                let fine = f.grid();
                let gap = p
                    .mask()
                    .interior()
                    .iter()
                    .filter_map(|&i| {
                        let x = p.grid().point(i);
                        let q = fine.nearest_node(&x);
                        let same = fine.point(q).iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9 * gc.h);
                        (same && f.mask().is_interior(q)).then(|| (p.omega().get(i) - f.omega().get(q)).abs())
                    })
                    .fold(0.0, f64::max);
                table.push(gc.h, gap, 0.0);
                rec.scalar("sup_gap", gap);
            }
            rec.seconds = t0.elapsed().as_secs_f64();
            records.push(rec);
            prev = Some(f);
        }
        Ok(table)
    })();
    match table {
        Ok(t) => {
            let mut rec = TaskRecord::new("refine");
            let path = out.join("refine.csv");
            match t.write_csv(&path) {
                Ok(()) => rec.artifacts.push("refine.csv".into()),
                Err(e) => {
                    rec.status = TaskStatus::Error;
                    rec.message = e.to_string();
                }
            }
            for w in t.rows.windows(2) {
                if w[1].sup_gap > 0.0 {
                    rec.scalar(&format!("order_{}", w[1].j), (w[0].sup_gap / w[1].sup_gap).log2());
                }
            }
            if rec.status == TaskStatus::Passed && !t.is_monotone() {
                rec.status = TaskStatus::Failed;
                rec.message = "level differences do not decrease".into();
            }
            records.push(rec);
        }
        Err(e) => records.push(TaskRecord::error("refine", e)),
    }
    let summary = RunSummary::new(cfg, "refine", records);
    let _ = summary.write(out);
    summary
}

/// Task list of a `verify` suite. Every task name is also a suite of its
/// own; `connection` adds the bounds check and `all` selects everything.
pub fn suite_tasks(name: &str) -> Option<Vec<Task>> {
    match name {
        "all" => Some(Task::ALL.to_vec()),
        "connection" => Some(vec![Task::Bounds, Task::Connection]),
        "harmonic" => Some(vec![Task::HarmonicResidual]),
        other => Task::ALL.into_iter().find(|t| t.name() == other).map(|t| vec![t]),
    }
}

/// Names accepted by [`suite_tasks`].
pub fn suite_names() -> Vec<&'static str> {
    let mut v = vec!["all", "connection", "harmonic"];
    v.extend(Task::ALL.iter().map(|t| t.name()).filter(|n| *n != "connection"));
    v
}
