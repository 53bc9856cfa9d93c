//! Derivative self-checks against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::ledger::BudgetLedger;
use crate::linalg::{dot, norm};
use crate::sensitivity::build_context;
use crate::solver::TrustRegionSettings;
use crate::strip::{self, Configuration, StripModel, StripParams};
use crate::system::{EquilibriumSystem, StripSystem};
use crate::tasks::{self, InitialShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    pub configs: usize,
    pub node_count: usize,
    pub sensitivity_states: usize,
    pub sensitivity_node_count: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub adjoint_tolerance: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            configs: 100,
            node_count: 21,
            sensitivity_states: 5,
            sensitivity_node_count: 31,
            seed: 0,
            tolerance: 1e-4,
            adjoint_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub results: Vec<CheckResult>,
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

/// A smooth random deformation of the straight strip with per-node jitter.
pub fn random_configuration<R: Rng>(model: &StripModel, rng: &mut R) -> Configuration {
    let l = model.length();
    let n = model.node_count();
    let amps: Vec<f64> = (0..3).map(|_| rng.random_range(-0.1..0.1) * l).collect();
    let stretch = rng.random_range(-0.02..0.02);
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let y: f64 = amps.iter().enumerate().map(|(m, a)| a * ((m + 1) as f64 * std::f64::consts::PI * s).sin()).sum();
            let jitter = 1e-2 * model.rest_edge_length();
            [
                (1.0 + stretch) * s * l + jitter * rng.random_range(-1.0..1.0),
                y + jitter * rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    Configuration::from_positions(model, &positions)
}

fn central<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: F, x: &[f64], dir: &[f64], h: f64) -> Result<Vec<f64>> {
    let p: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let m: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    Ok(f(&p)?.iter().zip(f(&m)?).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Max relative errors of the energy gradient, Hessian, mixed Jacobian, and
/// curvature-loss gradient on one configuration.
fn strip_derivatives(model: &StripModel, cfg: &Configuration, rng: &mut ChaCha20Rng) -> Result<[f64; 4]> {
    let h = 1e-7;
    let (q_b, q_f) = (&cfg.q_b, &cfg.q_f);
    let energy = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(vec![strip::total_energy(model, &Configuration::new(model, q_b.clone(), x.to_vec())?)?])
    };
    let grad = strip::residual(model, cfg)?;
    let fd_grad: Vec<f64> = (0..q_f.len())
        .map(|i| central(energy, q_f, &unit(q_f.len(), i), h).map(|v| v[0]))
        .collect::<Result<_>>()?;

    let v: Vec<f64> = (0..q_f.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hv = strip::hessian_xx(model, cfg)?.mul_vec(&v);
    let fd_hv = central(|x| strip::residual_of(model, q_b, x), q_f, &v, h)?;

    let w: Vec<f64> = (0..q_b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gw = strip::jacobian_xz(model, cfg)?.mul_vec(&w);
    let fd_gw = central(|z| strip::residual_of(model, z, q_f), q_b, &w, h)?;

    let target: Vec<f64> = (0..model.node_count() - 2).map(|_| rng.random_range(-5.0..5.0)).collect();
    let loss = tasks::terminal_loss_curvature(model, cfg, &target)?;
    let curv = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(vec![tasks::terminal_loss_curvature(model, &Configuration::new(model, q_b.clone(), x.to_vec())?, &target)?.value])
    };
    let fd_loss: Vec<f64> = (0..q_f.len())
        .map(|i| central(curv, q_f, &unit(q_f.len(), i), h).map(|v| v[0]))
        .collect::<Result<_>>()?;

    Ok([
        rel_error(&grad, &fd_grad),
        rel_error(&hv, &fd_hv),
        rel_error(&gw, &fd_gw),
        rel_error(&loss.grad_x, &fd_loss),
    ])
}

/// Solver settings tight enough for finite differences of the
/// equilibrium map.
pub fn tight_solver() -> TrustRegionSettings {
    TrustRegionSettings {
        gradient_tolerance: 1e-14,
        max_outer_iterations: 500,
        ..Default::default()
    }
}

/// Relative error of `Sᵀv` against finite differences of the equilibrium
/// map, and the adjoint-identity mismatch, on one equilibrium state.
pub fn sensitivity_check(system: &StripSystem, z: &[f64], x: &[f64], rng: &mut ChaCha20Rng) -> Result<(f64, f64, u64)> {
    let ledger = BudgetLedger::new();
    let eq = system.solve(z, x)?;
    let ctx = build_context(system, z, &eq)?;
    let nx = system.free_dim();
    let nz = system.boundary_dim();
    let v: Vec<f64> = (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..nz).map(|_| rng.random_range(-1.0..1.0)).collect();
    let before = ledger.counts().equilibrium_solves;
    let stv = ctx.s_transpose_product(&v, &ledger)?;
    let su = ctx.s_product(&u, &ledger)?;
    let product_solves = ledger.counts().equilibrium_solves - before;

    let eps = 1e-6 * system.model.length();
    let fd: Vec<f64> = (0..nz)
        .map(|j| {
            let dx = central(|zz| Ok(system.solve(zz, &eq.q_f_star)?.q_f_star), z, &unit(nz, j), eps)?;
            Ok(dot(&v, &dx))
        })
        .collect::<Result<_>>()?;
    let lhs = dot(&stv, &u);
    let rhs = dot(&v, &su);
    let adjoint = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
    Ok((rel_error(&stv, &fd), adjoint, product_solves))
}

fn summarize(name: &str, errors: &[f64], tolerance: f64) -> CheckResult {
    let max = errors.iter().cloned().fold(0.0, f64::max);
    CheckResult {
        name: name.to_string(),
        cases: errors.len(),
        max_rel_error: max,
        tolerance,
        passed: errors.iter().all(|e| e.is_finite()) && max < tolerance,
    }
}

pub fn run_checks(settings: &CheckSettings, exec: Execution) -> Result<CheckReport> {
    let model = StripModel::new(&StripParams {
        node_count: settings.node_count,
        ..Default::default()
    })?;
    let rows = exec
        .map_range(settings.configs, |i| {
            let mut rng = ChaCha20Rng::seed_from_u64(settings.seed);
            rng.set_stream(i as u64 + 1);
            let cfg = random_configuration(&model, &mut rng);
            strip_derivatives(&model, &cfg, &mut rng)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut results = vec![
        summarize("energy_gradient", &column(0), settings.tolerance),
        summarize("hessian_vector", &column(1), settings.tolerance),
        summarize("mixed_jacobian", &column(2), settings.tolerance),
        summarize("curvature_loss_gradient", &column(3), settings.tolerance),
    ];

    let sens_model = StripModel::new(&StripParams {
        node_count: settings.sensitivity_node_count,
        ..Default::default()
    })?;
    let system = StripSystem::new(sens_model.clone(), tight_solver());
    let base = tasks::make_initial_state(
        &sens_model,
        &InitialShape::Buckled {
            compression: 0.1,
            direction: 1.0,
        },
        &system.settings,
    )?;
    let sens = exec
        .map_range(settings.sensitivity_states, |i| {
            let mut rng = ChaCha20Rng::seed_from_u64(settings.seed);
            rng.set_stream(1_000_000 + i as u64);
            let l = sens_model.length();
            let mut z = base.z.clone();
            let (dl, dr) = (rng.random_range(-0.05..0.05) * l, rng.random_range(-0.05..0.05) * l);
            for (k, d) in [(1, dl), (3, dl), (5, dr), (7, dr)] {
                z[k] += d;
            }
            sensitivity_check(&system, &z, &base.x, &mut rng)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    results.push(summarize(
        "sensitivity_transpose_product",
        &sens.iter().map(|s| s.0).collect::<Vec<_>>(),
        settings.tolerance,
    ));
    results.push(summarize(
        "adjoint_identity",
        &sens.iter().map(|s| s.1).collect::<Vec<_>>(),
        settings.adjoint_tolerance,
    ));
    let mut solves = summarize(
        "equilibrium_solves_in_products",
        &sens.iter().map(|s| s.2 as f64).collect::<Vec<_>>(),
        0.5,
    );
    solves.max_rel_error = sens.iter().map(|s| s.2 as f64).sum();
    results.push(solves);
    Ok(CheckReport {
        passed: results.iter().all(|r| r.passed),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let settings = CheckSettings {
            configs: 6,
            sensitivity_states: 2,
            ..Default::default()
        };
        let report = run_checks(&settings, Execution::Parallel).unwrap();
        for r in &report.results {
            assert!(r.passed, "{r:?}");
        }
        assert!(report.passed);
    }
}
