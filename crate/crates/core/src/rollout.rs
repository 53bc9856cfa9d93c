//! Forward rollouts through exact equilibria and receding-horizon training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adjoint::{backward_pass, horizon_loss, parameter_gradient, Objective, ObjectiveKind};
use crate::controller::{segment_rng, AdamSettings, AdamState, ControllerParams};
use crate::error::{Error, Result};
use crate::ledger::{BudgetLedger, LedgerCounts, Phase};
use crate::linalg::DenseMatrix;
use crate::sensitivity::SensitivityContext;
use crate::system::EquilibriumSystem;

/// Map from control rates to boundary-coordinate rates, `ż = f(z, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// `f = u`; used with small test systems.
    Identity { dim: usize },
    /// Strip clamps: `u₀` is the transverse (y) rate of both left clamp
    /// nodes, `u₁` that of both right clamp nodes.
    Translation,
    /// Strip with the left clamp fixed and the right clamp moving rigidly:
    /// `u = (v_x, v_y, ω)` about the clamp midpoint.
    PlanarPose,
}

const STRIP_BOUNDARY_DIM: usize = 8;

impl Dynamics {
    pub fn control_dim(&self) -> usize {
        match self {
            Dynamics::Identity { dim } => *dim,
            Dynamics::Translation => 2,
            Dynamics::PlanarPose => 3,
        }
    }

    pub fn boundary_dim(&self) -> Option<usize> {
        match self {
            Dynamics::Identity { dim } => Some(*dim),
            _ => Some(STRIP_BOUNDARY_DIM),
        }
    }

    pub fn rate(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::Identity { .. } => u.to_vec(),
            Dynamics::Translation => {
                let mut f = vec![0.0; STRIP_BOUNDARY_DIM];
                f[1] = u[0];
                f[3] = u[0];
                f[5] = u[1];
                f[7] = u[1];
                f
            }
            Dynamics::PlanarPose => {
                let hx = 0.5 * (z[4] - z[6]);
                let hy = 0.5 * (z[5] - z[7]);
                let mut f = vec![0.0; STRIP_BOUNDARY_DIM];
                f[4] = u[0] - u[2] * hy;
                f[5] = u[1] + u[2] * hx;
                f[6] = u[0] + u[2] * hy;
                f[7] = u[1] - u[2] * hx;
                f
            }
        }
    }

    /// `A = ∂f/∂z`, or `None` when it vanishes identically.
    pub fn jac_z(&self, _z: &[f64], u: &[f64]) -> Option<DenseMatrix> {
        match self {
            Dynamics::Identity { .. } | Dynamics::Translation => None,
            Dynamics::PlanarPose => {
                let w = 0.5 * u[2];
                let mut a = DenseMatrix::zeros(STRIP_BOUNDARY_DIM, STRIP_BOUNDARY_DIM);
                a.set(4, 5, -w);
                a.set(4, 7, w);
                a.set(5, 4, w);
                a.set(5, 6, -w);
                a.set(6, 5, w);
                a.set(6, 7, -w);
                a.set(7, 4, -w);
                a.set(7, 6, w);
                Some(a)
            }
        }
    }

    /// `B = ∂f/∂u`.
    pub fn jac_u(&self, z: &[f64], _u: &[f64]) -> DenseMatrix {
        match self {
            Dynamics::Identity { dim } => {
                let mut b = DenseMatrix::zeros(*dim, *dim);
                for i in 0..*dim {
                    b.set(i, i, 1.0);
                }
                b
            }
            Dynamics::Translation => {
                let mut b = DenseMatrix::zeros(STRIP_BOUNDARY_DIM, 2);
                b.set(1, 0, 1.0);
                b.set(3, 0, 1.0);
                b.set(5, 1, 1.0);
                b.set(7, 1, 1.0);
                b
            }
            Dynamics::PlanarPose => {
                let hx = 0.5 * (z[4] - z[6]);
                let hy = 0.5 * (z[5] - z[7]);
                let mut b = DenseMatrix::zeros(STRIP_BOUNDARY_DIM, 3);
                b.set(4, 0, 1.0);
                b.set(6, 0, 1.0);
                b.set(5, 1, 1.0);
                b.set(7, 1, 1.0);
                b.set(4, 2, -hy);
                b.set(5, 2, hx);
                b.set(6, 2, hy);
                b.set(7, 2, -hx);
                b
            }
        }
    }
}

/// Equilibrium state a rollout starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStart {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Global continuation parameter at the start.
    pub lambda: f64,
}

/// States `0..=K`, controls `0..K`, and, when requested, the sensitivity
/// contexts and dynamics Jacobians needed by the backward pass.
#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub dlambda: f64,
    pub lambdas: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub contexts: Vec<SensitivityContext>,
    pub jacobians: Vec<(Option<DenseMatrix>, DenseMatrix)>,
}

impl RolloutTrace {
    pub fn steps(&self) -> usize {
        self.u.len()
    }

    pub fn end(&self) -> RolloutStart {
        RolloutStart {
            x: self.x.last().expect("nonempty").clone(),
            z: self.z.last().expect("nonempty").clone(),
            lambda: *self.lambdas.last().expect("nonempty"),
        }
    }

    /// Copy without the backward-pass caches.
    pub fn states_only(&self) -> RolloutTrace {
        RolloutTrace {
            dlambda: self.dlambda,
            lambdas: self.lambdas.clone(),
            z: self.z.clone(),
            x: self.x.clone(),
            u: self.u.clone(),
            contexts: Vec::new(),
            jacobians: Vec::new(),
        }
    }

    /// Append `next`, whose first state must coincide with this trace's
    /// last state.
    pub fn extend(&mut self, next: &RolloutTrace) {
        self.lambdas.extend_from_slice(&next.lambdas[1..]);
        self.z.extend_from_slice(&next.z[1..]);
        self.x.extend_from_slice(&next.x[1..]);
        self.u.extend_from_slice(&next.u);
    }

    pub fn empty_at(start: &RolloutStart, dlambda: f64) -> RolloutTrace {
        RolloutTrace {
            dlambda,
            lambdas: vec![start.lambda],
            z: vec![start.z.clone()],
            x: vec![start.x.clone()],
            u: Vec::new(),
            contexts: Vec::new(),
            jacobians: Vec::new(),
        }
    }
}

/// Roll the controller forward `steps` continuation steps of size
/// `dlambda`, re-solving the equilibrium warm-started at each step.
#[allow(clippy::too_many_arguments)]
pub fn rollout<S: EquilibriumSystem + ?Sized>(
    system: &S,
    dynamics: &Dynamics,
    controller: &ControllerParams,
    start: &RolloutStart,
    steps: usize,
    dlambda: f64,
    with_sensitivities: bool,
    ledger: &BudgetLedger,
) -> Result<RolloutTrace> {
    let started = Instant::now();
    if start.z.len() != system.boundary_dim() || start.x.len() != system.free_dim() {
        return Err(Error::InvalidInput("rollout start does not match system dimensions".into()));
    }
    if controller.output_dim() != dynamics.control_dim() {
        return Err(Error::InvalidInput(format!(
            "controller emits {} controls, dynamics expects {}",
            controller.output_dim(),
            dynamics.control_dim()
        )));
    }
    let mut trace = RolloutTrace::empty_at(start, dlambda);
    for k in 0..steps {
        let lambda = start.lambda + k as f64 * dlambda;
        let z = &trace.z[k];
        let x = &trace.x[k];
        let u = controller.forward(lambda);
        if with_sensitivities {
            let (gx, gz) = system.linearize(x, z).map_err(|e| e.at_step(k))?;
            let ctx = SensitivityContext::from_parts(&gx, gz, x.clone(), z.clone()).map_err(|e| e.at_step(k))?;
            trace.contexts.push(ctx);
            trace.jacobians.push((dynamics.jac_z(z, &u), dynamics.jac_u(z, &u)));
        }
        let rate = dynamics.rate(z, &u);
        let z_next: Vec<f64> = z.iter().zip(&rate).map(|(a, r)| a + dlambda * r).collect();
        ledger.add_equilibrium_solves(1);
        let eq = system.solve(&z_next, x).map_err(|e| e.at_step(k + 1))?;
        trace.lambdas.push(start.lambda + (k + 1) as f64 * dlambda);
        trace.z.push(z_next);
        trace.x.push(eq.q_f_star);
        trace.u.push(u);
    }
    ledger.add_time(Phase::Forward, started.elapsed());
    Ok(trace)
}

/// Everything a training run needs besides its state.
pub struct Problem<'a, S: EquilibriumSystem + ?Sized, O: Objective + ?Sized> {
    pub system: &'a S,
    pub dynamics: &'a Dynamics,
    pub objective: &'a O,
    pub layer_sizes: &'a [usize],
    pub u_max: &'a [f64],
}

impl<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized> Problem<'_, S, O> {
    pub fn init_controller(&self, seed: u64, segment: usize) -> Result<ControllerParams> {
        ControllerParams::xavier(self.layer_sizes, self.u_max, &mut segment_rng(seed, segment))
    }

    /// One states-only rollout and its objective value.
    pub fn evaluate(
        &self,
        controller: &ControllerParams,
        start: &RolloutStart,
        steps: usize,
        dlambda: f64,
        ledger: &BudgetLedger,
    ) -> Result<(RolloutTrace, f64)> {
        ledger.add_objective_evaluations(1);
        let trace = rollout(self.system, self.dynamics, controller, start, steps, dlambda, false, ledger)?;
        let loss = horizon_loss(&trace, self.objective)?;
        Ok((trace, loss))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Continuation steps over the full horizon, `K`.
    pub total_steps: usize,
    /// Steps per receding-horizon segment, `H`; `H ≥ K` means one segment.
    pub horizon: usize,
    /// Total optimizer updates `T`, split evenly over segments with the
    /// remainder going to the last one.
    pub updates: usize,
    /// Early-stop window, in updates.
    pub patience: usize,
    /// Early stop when the best segment loss improved by less than this
    /// fraction over the window.
    pub min_rel_improvement: f64,
    pub adam: AdamSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            total_steps: 101,
            horizon: 10,
            updates: 200,
            patience: 10,
            min_rel_improvement: 1e-4,
            adam: AdamSettings::default(),
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.horizon == 0 {
            return Err(Error::Config("total_steps and horizon must be at least 1".into()));
        }
        if !(self.min_rel_improvement >= 0.0) {
            return Err(Error::Config("min_rel_improvement must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dlambda(&self) -> f64 {
        1.0 / self.total_steps as f64
    }

    pub fn segment_count(&self) -> usize {
        self.total_steps.div_ceil(self.horizon)
    }

    pub fn segment_steps(&self, segment: usize) -> usize {
        self.horizon.min(self.total_steps - segment * self.horizon)
    }

    pub fn segment_updates(&self, segment: usize) -> usize {
        let m = self.segment_count();
        let base = self.updates / m;
        if segment + 1 == m {
            base + self.updates % m
        } else {
            base
        }
    }
}

/// One optimizer update as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub segment: usize,
    pub segment_loss: Option<f64>,
    /// Full-horizon task loss, present only when this update's rollout
    /// completes the horizon.
    pub task_loss: Option<f64>,
    pub best_so_far: Option<f64>,
    pub counts: LedgerCounts,
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub controller: ControllerParams,
    pub executed: RolloutTrace,
    pub executed_loss: f64,
    pub loss_history: Vec<Option<f64>>,
    pub updates_used: usize,
}

#[derive(Debug, Clone)]
pub struct RhcOutcome {
    pub executed: RolloutTrace,
    pub segments: Vec<SegmentOutcome>,
    pub updates: Vec<UpdateRecord>,
    pub task_loss: f64,
    pub best_so_far: f64,
}

/// Tracks the best full-horizon loss and emits update records.
struct Recorder<'a> {
    updates: Vec<UpdateRecord>,
    best: Option<f64>,
    sink: &'a mut dyn FnMut(&UpdateRecord),
}

impl Recorder<'_> {
    fn observe_task_loss(&mut self, loss: f64) {
        if loss.is_finite() && self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
        }
    }

    fn push(&mut self, segment: usize, segment_loss: Option<f64>, task_loss: Option<f64>, ledger: &BudgetLedger) {
        if let Some(l) = task_loss {
            self.observe_task_loss(l);
        }
        let rec = UpdateRecord {
            update: self.updates.len(),
            segment,
            segment_loss,
            task_loss,
            best_so_far: self.best,
            counts: ledger.counts(),
        };
        (self.sink)(&rec);
        self.updates.push(rec);
    }
}

#[allow(clippy::too_many_arguments)]
fn train_segment_inner<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    start: &RolloutStart,
    segment: usize,
    steps: usize,
    updates: usize,
    settings: &TrainSettings,
    seed: u64,
    prefix_loss: f64,
    completes_horizon: bool,
    ledger: &BudgetLedger,
    recorder: &mut Recorder<'_>,
) -> Result<SegmentOutcome> {
    let dl = settings.dlambda();
    let task_loss = |seg: f64| match problem.objective.kind() {
        ObjectiveKind::Terminal => seg,
        ObjectiveKind::Running => prefix_loss + seg,
    };
    let mut controller = problem.init_controller(seed, segment)?;
    let mut adam = AdamState::new(controller.param_count(), settings.adam.clone());
    let mut best: Option<(f64, Vec<f64>, RolloutTrace)> = None;
    let mut best_history: Vec<f64> = Vec::new();
    let mut loss_history = Vec::new();
    let mut used = 0;

    for _ in 0..updates {
        used += 1;
        ledger.add_objective_evaluations(1);
        let attempt = (|| -> Result<(f64, RolloutTrace, Vec<f64>)> {
            let trace = rollout(problem.system, problem.dynamics, &controller, start, steps, dl, true, ledger)?;
            let loss = horizon_loss(&trace, problem.objective)?;
            let du = backward_pass(&trace, problem.objective, ledger)?;
            let grad = parameter_gradient(&du, &controller, &trace.lambdas);
            Ok((loss, trace, grad))
        })();
        match attempt {
            Ok((loss, trace, grad)) => {
                if best.as_ref().is_none_or(|b| loss < b.0) {
                    best = Some((loss, controller.theta().to_vec(), trace.states_only()));
                }
                let t0 = Instant::now();
                let stepped = adam.step(controller.theta_mut(), &grad);
                ledger.add_time(Phase::Update, t0.elapsed());
                if let Err(e) = stepped {
                    log::warn!("segment {segment}: update rejected: {e}");
                    adam.settings.learning_rate *= 0.5;
                }
                ledger.add_optimizer_updates(1);
                loss_history.push(Some(loss));
                recorder.push(segment, Some(loss), completes_horizon.then(|| task_loss(loss)), ledger);
            }
            Err(e) => {
                log::warn!("segment {segment}: rollout failed, reverting to best parameters: {e}");
                if let Some((_, theta, _)) = &best {
                    controller = controller.with_theta(theta);
                } else {
                    controller = problem.init_controller(seed, segment)?;
                }
                adam.settings.learning_rate *= 0.5;
                ledger.add_optimizer_updates(1);
                loss_history.push(None);
                recorder.push(segment, None, None, ledger);
            }
        }
        let current_best = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        best_history.push(current_best);
        let t = best_history.len();
        if t > settings.patience {
            let old = best_history[t - 1 - settings.patience];
            if old.is_finite() && old - current_best <= settings.min_rel_improvement * old.abs() {
                log::debug!("segment {segment}: early stop after {t} updates");
                break;
            }
        }
    }

    ledger.add_execution_rollouts(1);
    let final_run = rollout(problem.system, problem.dynamics, &controller, start, steps, dl, false, ledger)
        .and_then(|trace| Ok((horizon_loss(&trace, problem.objective)?, trace)));
    let (executed_loss, executed, theta) = match (final_run, best) {
        (Ok((loss, _)), Some(b)) if b.0 <= loss => (b.0, b.2, b.1),
        (Ok((loss, trace)), _) => (loss, trace, controller.theta().to_vec()),
        (Err(e), Some(b)) => {
            log::warn!("segment {segment}: final rollout failed, executing best trace: {e}");
            (b.0, b.2, b.1)
        }
        (Err(e), None) => return Err(e),
    };
    if completes_horizon {
        recorder.observe_task_loss(task_loss(executed_loss));
    }
    Ok(SegmentOutcome {
        controller: controller.with_theta(&theta),
        executed,
        executed_loss,
        loss_history,
        updates_used: used,
    })
}

/// Train and execute a single segment of `steps` continuation steps from
/// `start`, using at most `updates` optimizer updates.
#[allow(clippy::too_many_arguments)]
pub fn train_segment<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    start: &RolloutStart,
    segment: usize,
    steps: usize,
    updates: usize,
    settings: &TrainSettings,
    seed: u64,
    ledger: &BudgetLedger,
) -> Result<SegmentOutcome> {
    let mut sink = |_: &UpdateRecord| {};
    let mut recorder = Recorder {
        updates: Vec::new(),
        best: None,
        sink: &mut sink,
    };
    train_segment_inner(problem, start, segment, steps, updates, settings, seed, 0.0, true, ledger, &mut recorder)
}

/// Receding-horizon continuation: train a fresh controller per segment,
/// execute it, and re-anchor the next segment at the realized end state.
pub fn run_rhc<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    start: &RolloutStart,
    settings: &TrainSettings,
    seed: u64,
    ledger: &BudgetLedger,
    on_update: &mut dyn FnMut(&UpdateRecord),
) -> Result<RhcOutcome> {
    settings.validate()?;
    let dl = settings.dlambda();
    let m = settings.segment_count();
    let mut recorder = Recorder {
        updates: Vec::new(),
        best: None,
        sink: on_update,
    };
    let mut executed = RolloutTrace::empty_at(start, dl);
    let mut segments = Vec::with_capacity(m);
    let mut prefix_loss = 0.0;
    let mut anchor = start.clone();
    for seg in 0..m {
        let outcome = train_segment_inner(
            problem,
            &anchor,
            seg,
            settings.segment_steps(seg),
            settings.segment_updates(seg),
            settings,
            seed,
            prefix_loss,
            seg + 1 == m,
            ledger,
            &mut recorder,
        )?;
        if problem.objective.kind() == ObjectiveKind::Running {
            prefix_loss += outcome.executed_loss;
        }
        anchor = outcome.executed.end();
        executed.extend(&outcome.executed);
        segments.push(outcome);
    }
    let task_loss = horizon_loss(&executed, problem.objective)?;
    recorder.observe_task_loss(task_loss);
    Ok(RhcOutcome {
        executed,
        segments,
        best_so_far: recorder.best.unwrap_or(f64::INFINITY),
        updates: recorder.updates,
        task_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::LossTerm;
    use crate::system::QuadraticSystem;

    fn toy() -> QuadraticSystem {
        QuadraticSystem::new(DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]), vec![0.0, 0.0]).unwrap()
    }

    struct Reach(Vec<f64>);

    impl Objective for Reach {
        fn kind(&self) -> ObjectiveKind {
            ObjectiveKind::Terminal
        }
        fn eval(&self, _: f64, x: &[f64], z: &[f64], _: bool) -> Result<LossTerm> {
            let r: Vec<f64> = x.iter().zip(&self.0).map(|(a, b)| a - b).collect();
            Ok(LossTerm {
                value: 0.5 * r.iter().map(|v| v * v).sum::<f64>(),
                grad_x: r,
                grad_z: vec![0.0; z.len()],
            })
        }
    }

    fn start() -> RolloutStart {
        RolloutStart {
            x: vec![0.0, 0.0],
            z: vec![0.0, 0.0],
            lambda: 0.0,
        }
    }

    #[test]
    fn zero_controller_keeps_state() {
        let sys = toy();
        let ctrl = ControllerParams::zeros(&[1, 4, 2], &[1.0, 1.0]).unwrap();
        let ledger = BudgetLedger::new();
        let trace = rollout(&sys, &Dynamics::Identity { dim: 2 }, &ctrl, &start(), 6, 0.1, false, &ledger).unwrap();
        assert!(trace.z.iter().all(|z| z == &vec![0.0, 0.0]));
        assert_eq!(ledger.counts().equilibrium_solves, 6);
    }

    #[test]
    fn constant_translation_rate() {
        // zero weights, bias b: u = u_max·tanh(b) for all λ
        let b = [0.3_f64, -0.2];
        let ctrl = ControllerParams::from_theta(&[1, 2], &[0.1, 0.1], vec![0.0, 0.0, b[0], b[1]]).unwrap();
        let u = ctrl.forward(0.0);
        let dynamics = Dynamics::Translation;
        let mut z = vec![0.0; 8];
        for k in 0..10 {
            let f = dynamics.rate(&z, &u);
            for (zi, fi) in z.iter_mut().zip(&f) {
                *zi += 0.1 * fi;
            }
            assert_eq!(dynamics.rate(&z, &u), f, "step {k}");
        }
        assert!((z[1] - u[0]).abs() < 1e-15 && (z[7] - u[1]).abs() < 1e-15);
        assert_eq!(z[0], 0.0);
    }

    #[test]
    fn planar_pose_jacobians_match_finite_differences() {
        let d = Dynamics::PlanarPose;
        let z = [0.0, 0.0, 0.01, 0.0, 0.19, 0.003, 0.2, -0.002];
        let u = [0.02, -0.01, 0.7];
        let a = d.jac_z(&z, &u).unwrap();
        let b = d.jac_u(&z, &u);
        let h = 1e-7;
        for j in 0..8 {
            let mut zp = z;
            zp[j] += h;
            let mut zm = z;
            zm[j] -= h;
            let (fp, fm) = (d.rate(&zp, &u), d.rate(&zm, &u));
            for i in 0..8 {
                assert!(((fp[i] - fm[i]) / (2.0 * h) - a.get(i, j)).abs() < 1e-8);
            }
        }
        for j in 0..3 {
            let mut up = u;
            up[j] += h;
            let mut um = u;
            um[j] -= h;
            let (fp, fm) = (d.rate(&z, &up), d.rate(&z, &um));
            for i in 0..8 {
                assert!(((fp[i] - fm[i]) / (2.0 * h) - b.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn segment_budget_split() {
        let s = TrainSettings {
            total_steps: 101,
            horizon: 10,
            updates: 200,
            ..Default::default()
        };
        assert_eq!(s.segment_count(), 11);
        assert_eq!(s.segment_steps(10), 1);
        assert_eq!((0..11).map(|m| s.segment_updates(m)).sum::<usize>(), 200);
        assert_eq!(s.segment_updates(10), 18 + 2);
    }

    #[test]
    fn zero_budget_segment_executes_initial_controller() {
        let sys = toy();
        let obj = Reach(vec![0.05, 0.05]);
        let problem = Problem {
            system: &sys,
            dynamics: &Dynamics::Identity { dim: 2 },
            objective: &obj,
            layer_sizes: &[1, 4, 2],
            u_max: &[1.0, 1.0],
        };
        let settings = TrainSettings::default();
        let ledger = BudgetLedger::new();
        let out = train_segment(&problem, &start(), 0, 5, 0, &settings, 9, &ledger).unwrap();
        assert_eq!(out.controller, problem.init_controller(9, 0).unwrap());
        assert_eq!(out.updates_used, 0);
        assert_eq!(ledger.counts().execution_rollouts, 1);
        assert_eq!(ledger.counts().equilibrium_solves, 5);
    }

    #[test]
    fn toy_segment_reaches_target() {
        let sys = toy();
        let obj = Reach(vec![0.05, 0.05]);
        let problem = Problem {
            system: &sys,
            dynamics: &Dynamics::Identity { dim: 2 },
            objective: &obj,
            layer_sizes: &[1, 8, 2],
            u_max: &[1.0, 1.0],
        };
        let settings = TrainSettings {
            total_steps: 10,
            horizon: 10,
            updates: 400,
            patience: 400,
            ..Default::default()
        };
        let ledger = BudgetLedger::new();
        let mut records = Vec::new();
        let out = run_rhc(&problem, &start(), &settings, 4, &ledger, &mut |r| records.push(r.clone())).unwrap();
        assert!(out.best_so_far < 1e-10, "{}", out.best_so_far);
        let c = ledger.counts();
        assert_eq!(c.objective_evaluations, records.len() as u64);
        assert_eq!(c.equilibrium_solves, (c.objective_evaluations + c.execution_rollouts) * 10);
        let best: Vec<f64> = records.iter().filter_map(|r| r.best_so_far).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn horizon_shift_is_bitwise() {
        let sys = toy();
        let obj = Reach(vec![0.05, -0.02]);
        let problem = Problem {
            system: &sys,
            dynamics: &Dynamics::Identity { dim: 2 },
            objective: &obj,
            layer_sizes: &[1, 4, 2],
            u_max: &[0.5, 0.5],
        };
        let settings = TrainSettings {
            total_steps: 12,
            horizon: 5,
            updates: 9,
            ..Default::default()
        };
        let ledger = BudgetLedger::new();
        let out = run_rhc(&problem, &start(), &settings, 1, &ledger, &mut |_| {}).unwrap();
        assert_eq!(out.segments.len(), 3);
        for w in out.segments.windows(2) {
            assert_eq!(w[0].executed.x.last(), w[1].executed.x.first());
            assert_eq!(w[0].executed.z.last(), w[1].executed.z.first());
        }
        assert_eq!(out.executed.steps(), 12);
    }
}
