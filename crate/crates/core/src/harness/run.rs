//! Execute one configured run and write its artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_cem, run_spsa};
use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::harness::config::{Method, RunConfig};
use crate::ledger::{BudgetLedger, LedgerCounts, LedgerTimings};
use crate::rollout::{run_rhc, Problem, RolloutTrace, UpdateRecord};
use crate::system::StripSystem;
use crate::tasks::{make_initial_state, TaskKind, TaskObjective, TaskSpec};

pub const CONFIG_FILE: &str = "config.toml";
pub const UPDATES_FILE: &str = "updates.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: TaskKind,
    pub spec: String,
    pub method: Method,
    pub seed: u64,
    pub steps: usize,
    pub task_loss: f64,
    pub best_so_far: f64,
    pub tolerance: f64,
    pub success: bool,
    pub updates: usize,
    pub evaluations_per_update: f64,
    pub counts: LedgerCounts,
}

/// Executed states and controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub lambdas: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl From<&RolloutTrace> for RunTrace {
    fn from(t: &RolloutTrace) -> Self {
        Self {
            lambdas: t.lambdas.clone(),
            z: t.z.clone(),
            x: t.x.clone(),
            u: t.u.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub phases: LedgerTimings,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub spec: TaskSpec,
    pub trace: RunTrace,
    pub controllers: Vec<ControllerParams>,
    pub updates: Vec<UpdateRecord>,
    pub timing: Timing,
}

/// Run the configured method without touching the file system.
pub fn execute(config: &RunConfig, on_update: &mut dyn FnMut(&UpdateRecord)) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model()?;
    let spec = config.task_spec(&model)?;
    let start = make_initial_state(&model, &spec.initial, &config.solver)?;
    let system = StripSystem::new(model.clone(), config.solver.clone());
    let dynamics = config.task.dynamics();
    let objective = TaskObjective { model: &model, spec: &spec };
    let u_max = config.u_max(&model)?;
    let sizes = config.layer_sizes();
    let problem = Problem {
        system: &system,
        dynamics: &dynamics,
        objective: &objective,
        layer_sizes: &sizes,
        u_max: &u_max,
    };
    let train = config.effective_train();
    let ledger = BudgetLedger::new();
    let (executed, controllers, updates, task_loss, best) = match config.method {
        Method::Rhc | Method::AdjointOnly => {
            let out = run_rhc(&problem, &start, &train, config.seed, &ledger, on_update)?;
            let ctrls = out.segments.iter().map(|s| s.controller.clone()).collect();
            (out.executed, ctrls, out.updates, out.task_loss, out.best_so_far)
        }
        Method::Spsa => {
            let out = run_spsa(&problem, &start, train.total_steps, train.updates, &config.spsa, config.seed, config.execution, &ledger, on_update)?;
            (out.executed, vec![out.controller], out.updates, out.task_loss, out.best_so_far)
        }
        Method::Cem => {
            let out = run_cem(&problem, &start, train.total_steps, train.updates, &config.cem, config.seed, config.execution, &ledger, on_update)?;
            (out.executed, vec![out.controller], out.updates, out.task_loss, out.best_so_far)
        }
    };
    let counts = ledger.counts();
    let summary = RunSummary {
        task: config.task,
        spec: spec.name.clone(),
        method: config.method,
        seed: config.seed,
        steps: train.total_steps,
        task_loss,
        best_so_far: best,
        tolerance: spec.tolerance,
        success: spec.succeeded(task_loss),
        updates: counts.optimizer_updates as usize,
        evaluations_per_update: if counts.optimizer_updates > 0 {
            counts.objective_evaluations as f64 / counts.optimizer_updates as f64
        } else {
            0.0
        },
        counts,
    };
    Ok(RunOutput {
        summary,
        spec,
        trace: RunTrace::from(&executed),
        controllers,
        updates,
        timing: Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
            phases: ledger.timings(),
        },
    })
}

#[derive(Serialize)]
struct UpdateRow {
    update: usize,
    segment: usize,
    segment_loss: Option<f64>,
    task_loss: Option<f64>,
    best_so_far: Option<f64>,
    evaluations: u64,
    eq_solves: u64,
    lin_solves: u64,
}

pub fn write_updates(path: &Path, updates: &[UpdateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Malformed {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    for u in updates {
        w.serialize(UpdateRow {
            update: u.update,
            segment: u.segment,
            segment_loss: u.segment_loss,
            task_loss: u.task_loss,
            best_so_far: u.best_so_far,
            evaluations: u.counts.objective_evaluations,
            eq_solves: u.counts.equilibrium_solves,
            lin_solves: u.counts.linear_solves,
        })
        .map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn write_run(dir: &Path, config: &RunConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    fs::write(dir.join(CONFIG_FILE), config.to_toml()?)?;
    write_updates(&dir.join(UPDATES_FILE), &out.updates)?;
    write_json(&dir.join(SUMMARY_FILE), &out.summary)?;
    write_json(&dir.join(TRACE_FILE), &out.trace)?;
    write_json(&dir.join(TIMING_FILE), &out.timing)?;
    for (i, c) in out.controllers.iter().enumerate() {
        let f = fs::File::create(dir.join(CHECKPOINT_DIR).join(format!("segment_{i:03}.ckpt")))?;
        c.write_checkpoint(std::io::BufWriter::new(f))?;
    }
    Ok(())
}

/// Execute and write every artifact into `dir`.
pub fn run(config: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let out = execute(config, &mut |u| {
        if let (Some(l), Some(b)) = (u.segment_loss, u.best_so_far) {
            log::debug!("update {} segment {} loss {l:.3e} best {b:.3e}", u.update, u.segment);
        }
    })?;
    write_run(dir, config, &out)?;
    Ok(out)
}

pub fn read_trace(dir: &Path) -> Result<RunTrace> {
    let path = dir.join(TRACE_FILE);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
