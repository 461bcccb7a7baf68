use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alpha_measure::grid::ComplexGrid;
use alpha_measure_cli::{export_field, import_field, load_scenario, run, FieldFormat, Task, TaskStatus};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alpha-measure"))
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/disc_quarter.json")
}

fn bundled_json() -> Value {
    serde_json::from_str(&fs::read_to_string(bundled()).unwrap()).unwrap()
}

/// The bundled disc at h = 1/32, small enough for the direct oracle.
fn coarse_disc() -> Value {
    let mut v = bundled_json();
    v["grid"] = json!({ "n": 1, "h": 0.03125, "half_width": 1.03125 });
    v["holder"] = json!({ "pair_budget": 2000, "near_k": { "c": 2.92, "lambda": 1.0 } });
    v
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn config_errors(v: &Value) -> Vec<String> {
    let dir = tempfile::tempdir().unwrap();
    match load_scenario(&write_config(dir.path(), v)) {
        Ok(_) => Vec::new(),
        Err(e) => e.messages(),
    }
}

#[test]
fn bundled_scenario_is_valid() {
    let cfg = load_scenario(&bundled()).unwrap();
    assert_eq!(cfg.name, "disc_quarter");
    assert_eq!(cfg.grid.n, 1);
    assert_eq!(cfg.hash.len(), 64);
}

#[test]
fn three_variables_are_rejected() {
    let mut v = bundled_json();
    v["grid"]["n"] = json!(3);
    let errs = config_errors(&v);
    assert!(errs.iter().any(|e| e.contains("grid.n must be 1 or 2, got 3")), "{errs:?}");
}

#[test]
fn zero_weight_is_rejected() {
    let mut v = bundled_json();
    v["weight"] = json!({ "constant": 0.0 });
    let errs = config_errors(&v);
    assert!(errs.iter().any(|e| e.contains("sup ψ < 0 required")), "{errs:?}");
}

#[test]
fn nonnegative_expression_weight_is_rejected_on_k() {
    let mut v = bundled_json();
    v["weight"] = json!({ "expression": { "kind": "norm_sq", "scale": 1.0, "offset": 0.0 } });
    let errs = config_errors(&v);
    assert!(errs.iter().any(|e| e.contains("sup ψ < 0 required")), "{errs:?}");
}

#[test]
fn unknown_keys_and_missing_version_are_schema_errors() {
    let mut v = bundled_json();
    v["grid"]["spacing"] = json!(0.1);
    assert!(!config_errors(&v).is_empty());
    let mut v = bundled_json();
    v.as_object_mut().unwrap().remove("version");
    let errs = config_errors(&v);
    assert!(errs.iter().any(|e| e.contains("version")), "{errs:?}");
    let mut v = bundled_json();
    v["version"] = json!(2);
    assert!(config_errors(&v).iter().any(|e| e.contains("version must be 1")));
}

#[test]
fn every_structural_error_is_reported() {
    let mut v = bundled_json();
    v["grid"]["n"] = json!(4);
    v["weight"] = json!({ "constant": 1.0 });
    v["holder"]["pair_budget"] = json!(1);
    v["solver"] = json!({ "tol": -1.0 });
    let errs = config_errors(&v);
    assert!(errs.len() >= 4, "{errs:?}");
}

#[test]
fn invalid_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = bundled_json();
    v["grid"]["n"] = json!(3);
    let p = write_config(dir.path(), &v);
    let o = exec(&["solve", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.n must be 1 or 2"));
}

#[test]
fn dry_run_prints_the_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = exec(&["solve", "--config", bundled().to_str().unwrap(), "--out", out.to_str().unwrap(), "--dry-run"]);
    assert!(o.status.success());
    let s = text(&o);
    assert!(s.contains("1. measure"), "{s}");
    assert!(s.contains("connection (after measure, unweighted)"), "{s}");
    assert!(!out.exists());
}

#[test]
fn bundled_scenario_runs_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = exec(&["solve", "--config", bundled().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], json!(true));
    let conn = summary["tasks"].as_array().unwrap().iter().find(|t| t["task"] == "connection").unwrap();
    assert_eq!(conn["status"], "passed");

    let cfg = load_scenario(&bundled()).unwrap();
    let grid = cfg.grid.build().unwrap();
    let omega = import_field(&out.join("omega"), FieldFormat::Raw, &grid).unwrap();
    assert!(omega.values().iter().all(|&w| (-1.0..=0.0).contains(&w)));
    let at_half = omega.get(grid.nearest_node(&[0.5, 0.0]));
    assert!((at_half + 0.5).abs() < 2.0 * cfg.grid.h.powi(2) + 1e-8, "{at_half}");

    let fit: Value = serde_json::from_str(&fs::read_to_string(out.join("holder.fit.json")).unwrap()).unwrap();
    for key in ["C", "lambda", "residual", "region", "samples_csv_path"] {
        assert!(fit.get(key).is_some(), "missing {key}");
    }
    // Relative to the fit file.
    assert!(out.join(fit["samples_csv_path"].as_str().unwrap()).is_file());
}

#[test]
fn loose_tolerance_fails_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = coarse_disc();
    v["tasks"] = json!(["measure", "oracle"]);
    v["solver"] = json!({ "tol": 1e-3 });
    let p = write_config(dir.path(), &v);
    let out = dir.path().join("out");
    let o = exec(&["solve", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("oracle             failed"), "{}", text(&o));

    v["solver"] = json!({ "tol": 1e-12 });
    let p = write_config(dir.path(), &v);
    let o = exec(&["solve", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn field_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ComplexGrid::centered(1, 0.5, 0.125, 1 << 20).unwrap();
    let f = alpha_measure::grid::GridFunction::from_fn(grid.clone(), |x| x[0].sin() - x[1] / 3.0);

    let csv = dir.path().join("f.csv");
    export_field(&f, &csv, FieldFormat::Csv).unwrap();
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "index,x1,y1,value");
    assert_eq!(import_field(&csv, FieldFormat::Csv, &grid).unwrap().values(), f.values());

    let stem = dir.path().join("f");
    let files = export_field(&f, &stem, FieldFormat::Raw).unwrap();
    assert_eq!(files.len(), 2);
    assert_eq!(fs::metadata(&files[0]).unwrap().len(), 8 * grid.len() as u64);
    assert_eq!(import_field(&stem, FieldFormat::Raw, &grid).unwrap().values(), f.values());
}

/// Every file except `summary.json` must match byte for byte.
fn data_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "summary.json" {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_scenario(&bundled()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &cfg.tasks, &a, "solve").passed);
    assert!(run(&cfg, &cfg.tasks, &b, "solve").passed);
    let (fa, fb) = (data_files(&a), data_files(&b));
    assert!(fa.len() >= 10);
    assert_eq!(fa.len(), fb.len());
    for ((pa, da), (pb, db)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs", pa.display());
    }
}

#[test]
fn seed_changes_holder_samples_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load_scenario(&bundled()).unwrap();
    let tasks = [Task::Holder];
    let a = dir.path().join("a");
    run(&cfg, &tasks, &a, "holder");
    cfg.seed += 1;
    let b = dir.path().join("b");
    run(&cfg, &tasks, &b, "holder");
    assert_eq!(fs::read(a.join("omega.f64")).unwrap(), fs::read(b.join("omega.f64")).unwrap());
    assert_ne!(fs::read(a.join("holder.samples.csv")).unwrap(), fs::read(b.join("holder.samples.csv")).unwrap());
}

#[test]
fn refine_writes_a_monotone_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &coarse_disc());
    let out = dir.path().join("out");
    let o = exec(&["refine", "--config", p.to_str().unwrap(), "--levels", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let table = fs::read_to_string(out.join("refine.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "j,h,sup_gap,monotone_ok");
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r.ends_with(",true")));
    let o = exec(&["refine", "--config", p.to_str().unwrap(), "--levels", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_suites_select_their_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &coarse_disc());
    let out = dir.path().join("out");
    let o = exec(&["verify", "--config", p.to_str().unwrap(), "--suite", "connection", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let s = text(&o);
    assert!(s.contains("connection         passed") && s.contains("bounds             passed"), "{s}");
    assert!(!s.contains("holder"));

    let o = exec(&["verify", "--config", p.to_str().unwrap(), "--suite", "oracle", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));

    let o = exec(&["verify", "--config", p.to_str().unwrap(), "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn holder_command_and_thread_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &coarse_disc());
    let out = dir.path().join("out");
    let o = bin()
        .args(["holder", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env(alpha_measure_cli::THREADS_ENV, "2")
        .output()
        .unwrap();
    let s = text(&o);
    assert!(s.contains("holder"), "{s}");
    assert!(out.join("holder.fit.json").is_file());
    assert!(out.join("holder.near_k.json").is_file());
    let o = bin()
        .args(["holder", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env(alpha_measure_cli::THREADS_ENV, "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inapplicable_oracle_does_not_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_scenario(&bundled()).unwrap();
    let s = run(&cfg, &[Task::Oracle], dir.path(), "verify");
    assert_eq!(s.record("oracle").unwrap().status, TaskStatus::Inapplicable);
    assert_eq!(s.exit_code(), 1);
}
