use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alpha_measure_cli::run::suite_names;
use alpha_measure_cli::{describe_plan, load_scenario, refine, run, suite_tasks, RunSummary, ScenarioConfig, Task, THREADS_ENV};
use clap::{Parser, Subcommand};

/// Exit code for unreadable or invalid scenarios and bad arguments.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "alpha-measure", version, about = "Weighted α-subharmonic measures on grids")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks listed in the scenario.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the scenario's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the plan without executing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run one verification suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve at h, h/2, … and tabulate level-to-level changes.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=8))]
        levels: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve, then sample and fit the Hölder modulus.
    Holder {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    load_scenario(path).map_err(|e| {
        for m in e.messages() {
            eprintln!("error: {m}");
        }
        ExitCode::from(EXIT_USAGE)
    })
}

fn report(summary: &RunSummary, out: &Path) -> ExitCode {
    for t in &summary.tasks {
        let status = serde_json::to_value(t.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        if t.message.is_empty() {
            println!("{:<18} {status}", t.task);
        } else {
            println!("{:<18} {status}: {}", t.task, t.message);
        }
    }
    println!("artifacts in {}", out.display());
    ExitCode::from(summary.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let (path, out, tasks, command) = match &cli.command {
        Command::Solve { config, out, .. } => (config, out, None, "solve"),
        Command::Verify { config, out, suite } => match suite_tasks(suite) {
            Some(t) => (config, out, Some(t), "verify"),
            None => {
                eprintln!("error: unknown suite {suite:?}; known: {}", suite_names().join(", "));
                return ExitCode::from(EXIT_USAGE);
            }
        },
        Command::Refine { config, out, .. } => (config, out, None, "refine"),
        Command::Holder { config, out } => (config, out, Some(vec![Task::Holder]), "holder"),
    };
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = out.clone().unwrap_or_else(|| cfg.output());
    let tasks = tasks.unwrap_or_else(|| cfg.tasks.clone());
    let summary = match cli.command {
        Command::Solve { dry_run: true, .. } => {
            print!("{}", describe_plan(&cfg, &tasks, &out));
            return ExitCode::SUCCESS;
        }
        Command::Refine { levels, .. } => refine(&cfg, levels, &out),
        _ => run(&cfg, &tasks, &out, command),
    };
    report(&summary, &out)
}
