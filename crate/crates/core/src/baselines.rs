//! Gradient-free full-horizon baselines over the controller parameters:
//! simultaneous-perturbation stochastic approximation and the cross-entropy
//! method. Both see only states-only rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adjoint::{horizon_loss, Objective};
use crate::controller::{AdamSettings, AdamState, ControllerParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ledger::BudgetLedger;
use crate::rollout::{rollout, Problem, RolloutStart, RolloutTrace, UpdateRecord};
use crate::system::EquilibriumSystem;

/// RNG stream reserved for baseline sampling, disjoint from segment streams.
const BASELINE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaSettings {
    /// Perturbation size `c`.
    pub perturbation: f64,
    /// Antithetic pairs per update; each pair costs two evaluations.
    pub pairs: usize,
    pub adam: AdamSettings,
}

impl Default for SpsaSettings {
    fn default() -> Self {
        Self {
            perturbation: 5e-3,
            pairs: 2,
            adam: AdamSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemSettings {
    pub population: usize,
    pub elite_fraction: f64,
    /// Weight of the elite statistics in the mean and spread update.
    pub smoothing: f64,
    /// Initial spread as a multiple of `max(u_max)`.
    pub initial_std_scale: f64,
    pub min_std: f64,
}

impl Default for CemSettings {
    fn default() -> Self {
        Self {
            population: 10,
            elite_fraction: 0.3,
            smoothing: 0.25,
            initial_std_scale: 0.5,
            min_std: 1e-2,
        }
    }
}

impl CemSettings {
    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population as f64).ceil() as usize).clamp(1, self.population)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub controller: ControllerParams,
    pub executed: RolloutTrace,
    pub task_loss: f64,
    pub best_so_far: f64,
    pub updates: Vec<UpdateRecord>,
}

/// Shared bookkeeping: best-ever parameters and update records.
struct Tracker<'a> {
    best: Option<(f64, Vec<f64>, RolloutTrace)>,
    updates: Vec<UpdateRecord>,
    sink: &'a mut dyn FnMut(&UpdateRecord),
}

impl Tracker<'_> {
    fn offer(&mut self, loss: f64, theta: &[f64], trace: &RolloutTrace) {
        if loss.is_finite() && self.best.as_ref().is_none_or(|b| loss < b.0) {
            self.best = Some((loss, theta.to_vec(), trace.clone()));
        }
    }

    fn push(&mut self, loss: Option<f64>, ledger: &BudgetLedger) {
        let rec = UpdateRecord {
            update: self.updates.len(),
            segment: 0,
            segment_loss: loss,
            task_loss: loss,
            best_so_far: self.best.as_ref().map(|b| b.0),
            counts: ledger.counts(),
        };
        (self.sink)(&rec);
        self.updates.push(rec);
    }

    /// Execute the final parameters once and keep whichever of them and the
    /// best-ever sample scores lower.
    fn finish<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
        self,
        problem: &Problem<'_, S, O>,
        start: &RolloutStart,
        steps: usize,
        dlambda: f64,
        last: ControllerParams,
        ledger: &BudgetLedger,
    ) -> Result<BaselineOutcome> {
        ledger.add_execution_rollouts(1);
        let final_run = rollout(problem.system, problem.dynamics, &last, start, steps, dlambda, false, ledger)
            .and_then(|t| Ok((horizon_loss(&t, problem.objective)?, t)));
        let (loss, executed, theta) = match (final_run, self.best) {
            (Ok((l, _)), Some(b)) if b.0 <= l || !l.is_finite() => (b.0, b.2, b.1),
            (Ok((l, t)), _) => (l, t, last.theta().to_vec()),
            (Err(_), Some(b)) => (b.0, b.2, b.1),
            (Err(e), None) => return Err(e),
        };
        let best_so_far = self
            .updates
            .iter()
            .filter_map(|u| u.best_so_far)
            .fold(loss, f64::min);
        Ok(BaselineOutcome {
            controller: last.with_theta(&theta),
            executed,
            task_loss: loss,
            best_so_far,
            updates: self.updates,
        })
    }
}

/// Two-sided estimate `ĝ_i = mean_p (L⁺ − L⁻) / (2 c Δ_i)` from
/// `(Δ, L(Θ + cΔ), L(Θ − cΔ))` triples with Rademacher `Δ`; `None` when
/// there are no pairs.
pub fn spsa_gradient(pairs: &[(&[f64], f64, f64)], c: f64) -> Option<Vec<f64>> {
    let n = pairs.first()?.0.len();
    let mut grad = vec![0.0; n];
    for (d, lp, lm) in pairs {
        let slope = (lp - lm) / (2.0 * c);
        for (g, di) in grad.iter_mut().zip(d.iter()) {
            *g += slope / di;
        }
    }
    let m = pairs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Some(grad)
}

/// Smoothed refit of a diagonal Gaussian to the elite samples:
/// `μ ← α μ_elite + (1 − α) μ`, `σ ← max(σ_min, α σ_elite + (1 − α) σ)`,
/// with Bessel-corrected elite spread.
pub fn cem_refit(mean: &mut [f64], std: &mut [f64], elites: &[&[f64]], settings: &CemSettings) {
    let k = elites.len() as f64;
    let a = settings.smoothing;
    for j in 0..mean.len() {
        let m = elites.iter().map(|t| t[j]).sum::<f64>() / k;
        let s = if elites.len() > 1 {
            (elites.iter().map(|t| (t[j] - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        mean[j] = a * m + (1.0 - a) * mean[j];
        std[j] = (a * s + (1.0 - a) * std[j]).max(settings.min_std);
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_all<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    base: &ControllerParams,
    thetas: &[Vec<f64>],
    start: &RolloutStart,
    steps: usize,
    dlambda: f64,
    exec: Execution,
    ledger: &BudgetLedger,
) -> Vec<Option<(f64, RolloutTrace)>> {
    exec.map(thetas, |theta| {
        let ctrl = base.with_theta(theta);
        match problem.evaluate(&ctrl, start, steps, dlambda, ledger) {
            Ok((trace, loss)) if loss.is_finite() => Some((loss, trace)),
            Ok(_) => None,
            Err(e) => {
                log::debug!("baseline evaluation failed: {e}");
                None
            }
        }
    })
}

/// SPSA with Rademacher perturbations and Adam on the averaged estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_spsa<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    start: &RolloutStart,
    steps: usize,
    updates: usize,
    settings: &SpsaSettings,
    seed: u64,
    exec: Execution,
    ledger: &BudgetLedger,
    on_update: &mut dyn FnMut(&UpdateRecord),
) -> Result<BaselineOutcome> {
    if settings.pairs == 0 || !(settings.perturbation > 0.0) {
        return Err(Error::Config("spsa needs at least one pair and a positive perturbation".into()));
    }
    let dl = 1.0 / steps as f64;
    let mut ctrl = problem.init_controller(seed, 0)?;
    let n = ctrl.param_count();
    let mut adam = AdamState::new(n, settings.adam.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(BASELINE_STREAM);
    let c = settings.perturbation;
    let mut tracker = Tracker {
        best: None,
        updates: Vec::new(),
        sink: on_update,
    };

    for _ in 0..updates {
        let deltas: Vec<Vec<f64>> = (0..settings.pairs)
            .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect();
        let thetas: Vec<Vec<f64>> = deltas
            .iter()
            .flat_map(|d| {
                let plus = ctrl.theta().iter().zip(d).map(|(t, di)| t + c * di).collect();
                let minus = ctrl.theta().iter().zip(d).map(|(t, di)| t - c * di).collect();
                [plus, minus]
            })
            .collect();
        let results = evaluate_all(problem, &ctrl, &thetas, start, steps, dl, exec, ledger);
        let mut pairs = Vec::with_capacity(settings.pairs);
        let mut update_min: Option<f64> = None;
        for (p, d) in deltas.iter().enumerate() {
            for j in [2 * p, 2 * p + 1] {
                if let Some((l, t)) = &results[j] {
                    tracker.offer(*l, &thetas[j], t);
                    update_min = Some(update_min.map_or(*l, |m| m.min(*l)));
                }
            }
            if let (Some((lp, _)), Some((lm, _))) = (&results[2 * p], &results[2 * p + 1]) {
                pairs.push((d.as_slice(), *lp, *lm));
            }
        }
        if let Some(grad) = spsa_gradient(&pairs, c) {
            if let Err(e) = adam.step(ctrl.theta_mut(), &grad) {
                log::warn!("spsa: update rejected: {e}");
            }
        } else {
            log::warn!("spsa: every perturbed rollout failed; skipping update");
        }
        ledger.add_optimizer_updates(1);
        tracker.push(update_min, ledger);
    }
    tracker.finish(problem, start, steps, dl, ctrl, ledger)
}

/// Cross-entropy method with a diagonal Gaussian over the parameters.
#[allow(clippy::too_many_arguments)]
pub fn run_cem<S: EquilibriumSystem + ?Sized, O: Objective + ?Sized>(
    problem: &Problem<'_, S, O>,
    start: &RolloutStart,
    steps: usize,
    updates: usize,
    settings: &CemSettings,
    seed: u64,
    exec: Execution,
    ledger: &BudgetLedger,
    on_update: &mut dyn FnMut(&UpdateRecord),
) -> Result<BaselineOutcome> {
    let elites = settings.elite_count();
    if settings.population < 2 || elites < 2 {
        return Err(Error::Config("cem needs a population with at least two elites".into()));
    }
    let dl = 1.0 / steps as f64;
    let init = problem.init_controller(seed, 0)?;
    let n = init.param_count();
    let mut mean = init.theta().to_vec();
    let sigma0 = settings.initial_std_scale * problem.u_max.iter().cloned().fold(0.0, f64::max);
    let mut std = vec![sigma0.max(settings.min_std); n];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(BASELINE_STREAM);
    let mut tracker = Tracker {
        best: None,
        updates: Vec::new(),
        sink: on_update,
    };

    for _ in 0..updates {
        let thetas: Vec<Vec<f64>> = (0..settings.population)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let results = evaluate_all(problem, &init, &thetas, start, steps, dl, exec, ledger);
        ledger.add_optimizer_updates(1);
        let mut ranked: Vec<(f64, usize)> = results
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_ref().map_or(f64::INFINITY, |(l, _)| *l), i))
            .collect();
        ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if !ranked[0].0.is_finite() {
            tracker.push(None, ledger);
            return Err(Error::PopulationFailed(settings.population));
        }
        for (i, r) in results.iter().enumerate() {
            if let Some((l, t)) = r {
                tracker.offer(*l, &thetas[i], t);
            }
        }
        let elite: Vec<&[f64]> = ranked[..elites]
            .iter()
            .filter(|r| r.0.is_finite())
            .map(|r| thetas[r.1].as_slice())
            .collect();
        cem_refit(&mut mean, &mut std, &elite, settings);
        tracker.push(Some(ranked[0].0), ledger);
    }
    let last = init.with_theta(&mean);
    tracker.finish(problem, start, steps, dl, last, ledger)
}
