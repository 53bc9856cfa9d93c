//! Budget-ledger audits of rollouts, backward passes, and training loops.

mod common;

use common::*;
use eqctl::adjoint::{backward_pass, horizon_loss};
use eqctl::baselines::{run_cem, run_spsa, CemSettings, SpsaSettings};
use eqctl::controller::{segment_rng, ControllerParams};
use eqctl::exec::Execution;
use eqctl::ledger::BudgetLedger;
use eqctl::rollout::{rollout, run_rhc, Problem, TrainSettings};
use eqctl::solver::TrustRegionSettings;
use eqctl::system::StripSystem;
use eqctl::tasks::{self, TaskKind, TaskObjective};

struct Fixture {
    model: eqctl::strip::StripModel,
    spec: tasks::TaskSpec,
    start: eqctl::rollout::RolloutStart,
    system: StripSystem,
}

fn fixture() -> Fixture {
    let model = model(21);
    let settings = TrustRegionSettings::default();
    let spec = tasks::preset(TaskKind::PointTarget, 0, &model, &settings).unwrap();
    let start = tasks::make_initial_state(&model, &spec.initial, &settings).unwrap();
    let system = StripSystem::new(model.clone(), settings);
    Fixture { model, spec, start, system }
}

#[test]
fn one_equilibrium_solve_per_step_and_one_linear_solve_per_backward_step() {
    let f = fixture();
    let dynamics = TaskKind::PointTarget.dynamics();
    let u_max = TaskKind::PointTarget.default_u_max(f.model.length());
    let ctrl = ControllerParams::xavier(&[1, 8, 2], &u_max, &mut segment_rng(3, 0)).unwrap();
    let objective = TaskObjective { model: &f.model, spec: &f.spec };
    let ledger = BudgetLedger::new();
    let trace = rollout(&f.system, &dynamics, &ctrl, &f.start, 12, 0.02, true, &ledger).unwrap();
    assert_eq!(ledger.counts().equilibrium_solves, 12);
    assert_eq!(ledger.counts().linear_solves, 0);
    let before = ledger.counts();
    backward_pass(&trace, &objective, &ledger).unwrap();
    let spent = ledger.counts().since(&before);
    assert_eq!(spent.equilibrium_solves, 0);
    assert_eq!(spent.linear_solves, 12);
    assert!(horizon_loss(&trace, &objective).unwrap() > 0.0);
}

#[test]
fn rhc_spends_one_evaluation_per_update() {
    let f = fixture();
    let dynamics = TaskKind::PointTarget.dynamics();
    let objective = TaskObjective { model: &f.model, spec: &f.spec };
    let u_max = TaskKind::PointTarget.default_u_max(f.model.length());
    let sizes = [1, 16, 2];
    let problem = Problem {
        system: &f.system,
        dynamics: &dynamics,
        objective: &objective,
        layer_sizes: &sizes,
        u_max: &u_max,
    };
    let settings = TrainSettings {
        total_steps: 20,
        horizon: 5,
        updates: 24,
        ..Default::default()
    };
    let ledger = BudgetLedger::new();
    let mut seen = 0;
    let out = run_rhc(&problem, &f.start, &settings, 1, &ledger, &mut |_| seen += 1).unwrap();
    let c = ledger.counts();
    assert_eq!(c.objective_evaluations, c.optimizer_updates);
    assert!(c.optimizer_updates as usize <= settings.updates);
    assert_eq!(seen, out.updates.len());
    assert_eq!(out.executed.steps(), 20);
    assert_eq!(out.segments.len(), 4);
    // one gradient rollout per update plus the executions
    assert!(c.equilibrium_solves >= c.optimizer_updates * 5);
    assert!(out.best_so_far <= out.task_loss);
}

#[test]
fn baselines_spend_their_population_per_update() {
    let f = fixture();
    let dynamics = TaskKind::PointTarget.dynamics();
    let objective = TaskObjective { model: &f.model, spec: &f.spec };
    let u_max = TaskKind::PointTarget.default_u_max(f.model.length());
    let sizes = [1, 8, 2];
    let problem = Problem {
        system: &f.system,
        dynamics: &dynamics,
        objective: &objective,
        layer_sizes: &sizes,
        u_max: &u_max,
    };
    let ledger = BudgetLedger::new();
    run_spsa(&problem, &f.start, 10, 6, &SpsaSettings::default(), 0, Execution::Parallel, &ledger, &mut |_| {}).unwrap();
    let c = ledger.counts();
    assert_eq!((c.optimizer_updates, c.objective_evaluations, c.execution_rollouts), (6, 24, 1));
    assert_eq!(c.equilibrium_solves, (24 + 1) * 10);

    let ledger = BudgetLedger::new();
    run_cem(&problem, &f.start, 10, 3, &CemSettings::default(), 0, Execution::Sequential, &ledger, &mut |_| {}).unwrap();
    let c = ledger.counts();
    assert_eq!((c.optimizer_updates, c.objective_evaluations, c.execution_rollouts), (3, 30, 1));
}
