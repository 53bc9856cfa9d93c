use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eqctl::exec::{init_threads, Execution};
use eqctl::harness::check::{run_checks, CheckSettings};
use eqctl::harness::config::{Method, RunConfig};
use eqctl::harness::run::write_json;
use eqctl::harness::{render, report, run};
use eqctl::sysid;
use eqctl::tasks::TaskKind;
use eqctl::Error;
use serde_json::json;

/// Equilibrium-constrained continuation control of a discrete elastic strip.
#[derive(Parser, Debug)]
#[command(name = "eqctl", version)]
struct Cli {
    /// Worker threads for data-parallel work (0 = all cores). Also read
    /// from EQCTL_THREADS.
    #[arg(long, global = true, env = "EQCTL_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and execute one controller, writing a run directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory. Also read from EQCTL_OUT.
        #[arg(long, env = "EQCTL_OUT")]
        out: Option<PathBuf>,
        /// point_target, trajectory_tracking, or shape_formation.
        #[arg(long)]
        task: Option<String>,
        /// rhc, adjoint_only, spsa, or cem.
        #[arg(long)]
        method: Option<String>,
        /// Total optimizer updates.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        preset: Option<usize>,
    },
    /// Identify the gravito-bending length from static snapshots.
    Sysid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of snapshot CSV files with JSON sidecars.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, env = "EQCTL_OUT")]
        out: Option<PathBuf>,
    },
    /// Draw a run directory as SVG.
    Render {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate every run below a directory.
    Report {
        root: PathBuf,
        #[arg(long, env = "EQCTL_OUT")]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every derivative.
    Check {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        configs: Option<usize>,
        #[arg(long, env = "EQCTL_OUT")]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<serde_json::Value, Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            task,
            method,
            budget,
            preset,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = task {
                cfg.task = TaskKind::parse(&t)?;
            }
            if let Some(m) = method {
                cfg.method = Method::parse(&m)?;
            }
            if let Some(b) = budget {
                cfg.train.updates = b;
            }
            if let Some(p) = preset {
                cfg.preset = p;
            }
            let dir = out.unwrap_or_else(|| {
                PathBuf::from("runs").join(format!("{}_{}_{}_seed{}", cfg.task.name(), cfg.preset, cfg.method.name(), cfg.seed))
            });
            let output = run::run(&cfg, &dir)?;
            Ok(json!({ "run_dir": dir, "summary": output.summary }))
        }
        Command::Sysid { config, snapshots, out } => {
            let cfg = load_config(config.as_deref())?;
            let model = cfg.model()?;
            let dir = out.unwrap_or_else(|| PathBuf::from("runs").join("sysid"));
            std::fs::create_dir_all(&dir)?;
            let source = snapshots.or(cfg.sysid.snapshots.as_ref().map(PathBuf::from));
            let (snaps, truth) = match source {
                Some(p) => (sysid::load_snapshots(&p)?, None),
                None => {
                    let snaps = sysid::synthetic_snapshots(&model, cfg.sysid.synthetic_length, &cfg.solver, cfg.execution)?;
                    sysid::write_snapshots(&dir.join("snapshots"), &snaps)?;
                    (snaps, Some(cfg.sysid.synthetic_length))
                }
            };
            let outcome = sysid::identify(&model, &snaps, &cfg.sysid.settings, cfg.execution)?;
            let result = json!({
                "snapshots": snaps.len(),
                "outcome": outcome,
                "synthetic_length": truth,
                "abs_error": truth.map(|t| (outcome.l_gb - t).abs()),
            });
            write_json(&dir.join("sysid.json"), &result)?;
            Ok(result)
        }
        Command::Render { run_dir, out } => {
            let path = render::render(&run_dir, out.as_deref())?;
            Ok(json!({ "svg": path }))
        }
        Command::Report { root, out } => {
            let out = out.unwrap_or_else(|| root.clone());
            let rows = report::report(&root, &out)?;
            Ok(json!({ "groups": rows.len(), "csv": out.join(report::REPORT_CSV), "markdown": out.join(report::REPORT_MD) }))
        }
        Command::Check { seed, configs, out } => {
            let mut settings = CheckSettings::default();
            if let Some(s) = seed {
                settings.seed = s;
            }
            if let Some(c) = configs {
                settings.configs = c;
            }
            let checks = run_checks(&settings, Execution::Parallel)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("check.json"), &checks)?;
            }
            if !checks.passed {
                let failed: Vec<&str> = checks.results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
                println!("{}", serde_json::to_string_pretty(&checks)?);
                return Err(Error::InvalidInput(format!("derivative checks failed: {}", failed.join(", "))));
            }
            Ok(serde_json::to_value(&checks)?)
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    if !init_threads(cli.threads) {
        log::warn!("thread pool already initialized");
    }
    match execute(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
            fail(e.kind(), e.to_string(), code)
        }
    }
}
