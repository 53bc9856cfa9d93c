//! Frozen-tangent proxy-adjoint backward pass.
//!
//! Along a rollout the boundary state follows `z_{k+1} = z_k + Δλ f(z_k, u_k)`
//! and the proxy free state `x_{k+1} = x_k + Δλ S_k f(z_k, u_k)`, with `S_k`
//! frozen at the realized equilibrium. The costates `a_k = ∂L/∂x_k` and
//! `g_k = ∂L/∂z_k` of that proxy recursion obey
//!
//! ```text
//! a_K = ∇ₓc_K                     g_K = ∇_z c_K
//! s_k = S_kᵀ a_{k+1}              d_k = g_{k+1} + s_k
//! ∂L/∂u_k = Δλ B_kᵀ d_k
//! a_k = a_{k+1} + ∇ₓc_k           g_k = g_{k+1} + Δλ A_kᵀ d_k + ∇_z c_k
//! ```
//!
//! where `c_k` is the weighted loss of state `k`. Each step costs one
//! `Sᵀv` product against the cached factorization.

use std::time::Instant;

use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::ledger::{BudgetLedger, Phase};
use crate::rollout::RolloutTrace;

/// Loss value with gradients with respect to free and boundary coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_z: Vec<f64>,
}

impl LossTerm {
    pub fn scaled(mut self, w: f64) -> Self {
        self.value *= w;
        for g in self.grad_x.iter_mut().chain(self.grad_z.iter_mut()) {
            *g *= w;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `L = φ(x_K, z_K)`.
    Terminal,
    /// `L = Σ_{k=1}^{K} Δλ ℓ(λ_k, x_k, z_k)`, a right-endpoint Riemann sum.
    Running,
}

pub trait Objective: Sync {
    fn kind(&self) -> ObjectiveKind;

    /// Unweighted loss of one state. Gradients may be left empty when
    /// `with_grad` is false.
    fn eval(&self, lambda: f64, x: &[f64], z: &[f64], with_grad: bool) -> Result<LossTerm>;

    /// Weight of state `k` in a horizon of `steps` continuation steps.
    fn weight(&self, k: usize, steps: usize, dlambda: f64) -> f64 {
        match self.kind() {
            ObjectiveKind::Terminal => {
                if k == steps {
                    1.0
                } else {
                    0.0
                }
            }
            ObjectiveKind::Running => {
                if k == 0 {
                    0.0
                } else {
                    dlambda
                }
            }
        }
    }
}

/// Objective value of a whole rollout.
pub fn horizon_loss<O: Objective + ?Sized>(trace: &RolloutTrace, obj: &O) -> Result<f64> {
    let steps = trace.steps();
    let mut total = 0.0;
    for k in 1..=steps {
        let w = obj.weight(k, steps, trace.dlambda);
        if w != 0.0 {
            total += w * obj.eval(trace.lambdas[k], &trace.x[k], &trace.z[k], false)?.value;
        }
    }
    Ok(total)
}

/// Per-step control gradients `∂L/∂u_k`, `k = 0..K−1`.
pub fn backward_pass<O: Objective + ?Sized>(
    trace: &RolloutTrace,
    obj: &O,
    ledger: &BudgetLedger,
) -> Result<Vec<Vec<f64>>> {
    let started = Instant::now();
    let steps = trace.steps();
    if trace.contexts.len() != steps {
        return Err(Error::InvalidInput(format!(
            "trace carries {} sensitivity contexts for {} steps",
            trace.contexts.len(),
            steps
        )));
    }
    let at = |step: usize| move |e: Error| Error::Backward { step, source: Box::new(e) };
    let dl = trace.dlambda;

    let w_k = obj.weight(steps, steps, dl);
    let term = obj.eval(trace.lambdas[steps], &trace.x[steps], &trace.z[steps], true).map_err(at(steps))?.scaled(w_k);
    let mut a = term.grad_x;
    let mut g = term.grad_z;
    let mut du = vec![Vec::new(); steps];

    for k in (0..steps).rev() {
        let s = if a.iter().all(|v| *v == 0.0) {
            vec![0.0; g.len()]
        } else {
            trace.contexts[k].s_transpose_product(&a, ledger).map_err(at(k))?
        };
        let d: Vec<f64> = g.iter().zip(&s).map(|(gi, si)| gi + si).collect();
        let (jz, ju) = &trace.jacobians[k];
        du[k] = ju.transpose_mul_vec(&d).into_iter().map(|v| dl * v).collect();
        if let Some(jz) = jz {
            for (gi, ai) in g.iter_mut().zip(jz.transpose_mul_vec(&d)) {
                *gi += dl * ai;
            }
        }
        if k > 0 {
            let w = obj.weight(k, steps, dl);
            if w != 0.0 {
                let term = obj.eval(trace.lambdas[k], &trace.x[k], &trace.z[k], true).map_err(at(k))?.scaled(w);
                for (ai, v) in a.iter_mut().zip(&term.grad_x) {
                    *ai += v;
                }
                for (gi, v) in g.iter_mut().zip(&term.grad_z) {
                    *gi += v;
                }
            }
        }
    }
    if let Some((k, i)) = du
        .iter()
        .enumerate()
        .find_map(|(k, d)| d.iter().position(|v| !v.is_finite()).map(|i| (k, i)))
    {
        return Err(Error::Backward {
            step: k,
            source: Box::new(Error::NonFiniteGradient(i)),
        });
    }
    ledger.add_time(Phase::Backward, started.elapsed());
    Ok(du)
}

/// `dL/dΘ = Σ_k (∂u_Θ(λ_k)/∂Θ)ᵀ ∂L/∂u_k`.
pub fn parameter_gradient(du: &[Vec<f64>], controller: &ControllerParams, lambdas: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; controller.param_count()];
    for (d, &lambda) in du.iter().zip(lambdas) {
        if d.iter().any(|v| *v != 0.0) {
            controller.pullback_into(lambda, d, &mut grad);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::segment_rng;
    use crate::linalg::DenseMatrix;
    use crate::rollout::{rollout, Dynamics, RolloutStart};
    use crate::system::QuadraticSystem;

    struct TargetLoss {
        target: Vec<f64>,
        kind: ObjectiveKind,
    }

    impl Objective for TargetLoss {
        fn kind(&self) -> ObjectiveKind {
            self.kind
        }

        fn eval(&self, lambda: f64, x: &[f64], z: &[f64], _with_grad: bool) -> Result<LossTerm> {
            let r: Vec<f64> = x.iter().zip(&self.target).map(|(a, b)| a - b * (1.0 + lambda)).collect();
            Ok(LossTerm {
                value: 0.5 * r.iter().map(|v| v * v).sum::<f64>() + 0.5 * z[0] * z[0],
                grad_x: r,
                grad_z: {
                    let mut g = vec![0.0; z.len()];
                    g[0] = z[0];
                    g
                },
            })
        }
    }

    fn toy() -> QuadraticSystem {
        QuadraticSystem::new(
            DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, 0.1]]),
            vec![0.01, -0.02, 0.0],
        )
        .unwrap()
    }

    fn total_loss(sys: &QuadraticSystem, ctrl: &ControllerParams, obj: &TargetLoss, steps: usize) -> f64 {
        let ledger = BudgetLedger::new();
        let z0 = vec![0.0, 0.0];
        let start = RolloutStart {
            x: sys.equilibrium(&z0),
            z: z0,
            lambda: 0.0,
        };
        let trace = rollout(sys, &Dynamics::Identity { dim: 2 }, ctrl, &start, steps, 1.0 / steps as f64, false, &ledger).unwrap();
        horizon_loss(&trace, obj).unwrap()
    }

    fn check_against_fd(kind: ObjectiveKind, steps: usize) {
        let sys = toy();
        let obj = TargetLoss {
            target: vec![0.3, -0.1, 0.2],
            kind,
        };
        let mut ctrl = ControllerParams::xavier(&[1, 6, 2], &[1.0, 1.0], &mut segment_rng(1, 0)).unwrap();
        // move every hidden unit off its ReLU kink at λ = 0
        for b in &mut ctrl.theta_mut()[6..12] {
            *b = 0.05;
        }
        let ledger = BudgetLedger::new();
        let z0 = vec![0.0, 0.0];
        let start = RolloutStart {
            x: sys.equilibrium(&z0),
            z: z0,
            lambda: 0.0,
        };
        let trace = rollout(&sys, &Dynamics::Identity { dim: 2 }, &ctrl, &start, steps, 1.0 / steps as f64, true, &ledger).unwrap();
        let du = backward_pass(&trace, &obj, &ledger).unwrap();
        let grad = parameter_gradient(&du, &ctrl, &trace.lambdas);
        let h = 1e-6;
        for i in 0..ctrl.param_count() {
            let mut p = ctrl.clone();
            p.theta_mut()[i] += h;
            let mut m = ctrl.clone();
            m.theta_mut()[i] -= h;
            let fd = (total_loss(&sys, &p, &obj, steps) - total_loss(&sys, &m, &obj, steps)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "{kind:?} K={steps} θ{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn terminal_gradient_is_exact_for_constant_sensitivity() {
        check_against_fd(ObjectiveKind::Terminal, 7);
    }

    #[test]
    fn running_gradient_is_exact_for_constant_sensitivity() {
        check_against_fd(ObjectiveKind::Running, 9);
    }

    #[test]
    fn zero_objective_gives_zero_gradients() {
        struct Zero;
        impl Objective for Zero {
            fn kind(&self) -> ObjectiveKind {
                ObjectiveKind::Running
            }
            fn eval(&self, _: f64, x: &[f64], z: &[f64], _: bool) -> Result<LossTerm> {
                Ok(LossTerm {
                    value: 0.0,
                    grad_x: vec![0.0; x.len()],
                    grad_z: vec![0.0; z.len()],
                })
            }
        }
        let sys = toy();
        let ctrl = ControllerParams::xavier(&[1, 4, 2], &[1.0, 1.0], &mut segment_rng(2, 0)).unwrap();
        let ledger = BudgetLedger::new();
        let start = RolloutStart {
            x: sys.equilibrium(&[0.0, 0.0]),
            z: vec![0.0, 0.0],
            lambda: 0.0,
        };
        let trace = rollout(&sys, &Dynamics::Identity { dim: 2 }, &ctrl, &start, 5, 0.2, true, &ledger).unwrap();
        let du = backward_pass(&trace, &Zero, &ledger).unwrap();
        assert!(du.iter().flatten().all(|v| *v == 0.0));
        assert!(parameter_gradient(&du, &ctrl, &trace.lambdas).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_linear_controller() {
        // one step, u = tanh(wλ + b) ≈ affine near zero; compare against
        // the explicit chain rule through B = I
        let du = vec![vec![0.25]];
        let ctrl = ControllerParams::from_theta(&[1, 1], &[1.0], vec![0.0, 0.0]).unwrap();
        let g = parameter_gradient(&du, &ctrl, &[0.4]);
        assert!((g[0] - 0.4 * 0.25).abs() < 1e-15);
        assert!((g[1] - 0.25).abs() < 1e-15);
    }
}
