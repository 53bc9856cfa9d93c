//! Trust-region Newton–CG energy minimization over free coordinates.
//!
//! Each outer iteration builds the quadratic model `gᵀp + ½pᵀHp` and
//! chooses the step by trying a banded Cholesky factorization first (Newton
//! or single dogleg) and falling back to Steihaug PCG with a Jacobi
//! preconditioner when `H` is not positive definite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, BandedSymmetricMatrix};
use crate::strip::{self, StripModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionSettings {
    pub initial_radius: f64,
    pub acceptance_threshold: f64,
    pub shrink_factor: f64,
    pub expand_factor: f64,
    pub max_outer_iterations: usize,
    pub gradient_tolerance: f64,
    pub radius_floor: f64,
    pub pcg_max_iterations: usize,
    pub jacobi_shift: f64,
}

impl Default for TrustRegionSettings {
    fn default() -> Self {
        Self {
            initial_radius: 1e-3,
            acceptance_threshold: 0.1,
            shrink_factor: 0.5,
            expand_factor: 2.0,
            max_outer_iterations: 200,
            gradient_tolerance: 1e-9,
            radius_floor: 1e-8,
            pcg_max_iterations: 200,
            jacobi_shift: 1e-12,
        }
    }
}

const SHRINK_BELOW: f64 = 0.25;
const EXPAND_ABOVE: f64 = 0.75;

impl TrustRegionSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_radius > 0.0
            && self.acceptance_threshold > 0.0
            && self.acceptance_threshold < 1.0
            && self.shrink_factor > 0.0
            && self.shrink_factor < 1.0
            && self.expand_factor > 1.0
            && self.gradient_tolerance > 0.0
            && self.radius_floor > 0.0
            && self.jacobi_shift > 0.0
            && self.max_outer_iterations > 0
            && self.pcg_max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trust-region settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Newton,
    Dogleg,
    Steihaug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    ConvergedGradient,
    ConvergedRadius,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub rho: f64,
    /// Radius used for this step.
    pub radius: f64,
    pub kind: StepKind,
    pub accepted: bool,
    /// Energy of the iterate after the accept/reject decision.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub q_f_star: Vec<f64>,
    pub residual_norm: f64,
    pub energy: f64,
    pub outer_iterations: usize,
    pub status: SolveStatus,
    pub step_trace: Vec<StepRecord>,
}

impl EquilibriumResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::ConvergedGradient
    }

    pub fn accepted_steps(&self) -> usize {
        self.step_trace.iter().filter(|s| s.accepted).count()
    }
}

/// Smooth objective with a banded Hessian.
pub trait EnergyLandscape {
    fn dim(&self) -> usize;
    fn energy(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, x: &[f64]) -> Result<BandedSymmetricMatrix>;

    /// `E(x) − E(x + p)`. Implementations may override this with a form
    /// that avoids cancellation.
    fn decrease(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        let trial: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + b).collect();
        Ok(self.energy(x)? - self.energy(&trial)?)
    }
}

/// Strip energy as a function of free coordinates at fixed clamps.
pub struct StripLandscape<'a> {
    pub model: &'a StripModel,
    pub q_b: &'a [f64],
}

impl EnergyLandscape for StripLandscape<'_> {
    fn dim(&self) -> usize {
        self.model.free_dim()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        let cfg = strip::Configuration {
            q_b: self.q_b.to_vec(),
            q_f: x.to_vec(),
        };
        strip::total_energy(self.model, &cfg)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        strip::residual_of(self.model, self.q_b, x)
    }

    fn hessian(&self, x: &[f64]) -> Result<BandedSymmetricMatrix> {
        strip::hessian_xx_of(self.model, self.q_b, x)
    }

    fn decrease(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        strip::energy_decrease(self.model, self.q_b, x, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionStep {
    pub step: Vec<f64>,
    pub kind: StepKind,
    pub predicted_reduction: f64,
    pub hit_boundary: bool,
}

fn model_reduction(h: &BandedSymmetricMatrix, g: &[f64], p: &[f64]) -> f64 {
    -(dot(g, p) + 0.5 * h.quad_form(p))
}

/// Largest `τ ≥ 0` with `‖a + τ d‖ = radius`, assuming `‖a‖ ≤ radius`.
fn boundary_tau(a: &[f64], d: &[f64], radius: f64) -> f64 {
    let dd = dot(d, d);
    let ad = dot(a, d);
    let aa = dot(a, a);
    let disc = (ad * ad - dd * (aa - radius * radius)).max(0.0);
    (-ad + disc.sqrt()) / dd
}

fn axpy(a: &[f64], tau: f64, d: &[f64]) -> Vec<f64> {
    a.iter().zip(d).map(|(x, y)| x + tau * y).collect()
}

/// Approximate minimizer of the quadratic model inside `‖p‖ ≤ radius`.
pub fn trust_region_step(
    h: &BandedSymmetricMatrix,
    g: &[f64],
    radius: f64,
    settings: &TrustRegionSettings,
) -> Result<TrustRegionStep> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("trust radius must be positive, got {radius}")));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    let gnorm = norm(g);
    if gnorm == 0.0 {
        return Ok(TrustRegionStep {
            step: vec![0.0; g.len()],
            kind: StepKind::Newton,
            predicted_reduction: 0.0,
            hit_boundary: false,
        });
    }

    let (step, kind, hit_boundary) = match h.cholesky() {
        Ok(chol) => {
            let p_n: Vec<f64> = chol.solve(g).into_iter().map(|v| -v).collect();
            if norm(&p_n) <= radius {
                (p_n, StepKind::Newton, false)
            } else {
                let ghg = h.quad_form(g);
                let p_u: Vec<f64> = g.iter().map(|v| -v * gnorm * gnorm / ghg).collect();
                if norm(&p_u) >= radius {
                    (g.iter().map(|v| -radius * v / gnorm).collect(), StepKind::Dogleg, true)
                } else {
                    let d: Vec<f64> = p_n.iter().zip(&p_u).map(|(a, b)| a - b).collect();
                    let tau = boundary_tau(&p_u, &d, radius);
                    (axpy(&p_u, tau, &d), StepKind::Dogleg, true)
                }
            }
        }
        Err(_) => {
            let (p, hit) = steihaug(h, g, radius, settings);
            (p, StepKind::Steihaug, hit)
        }
    };
    let predicted_reduction = model_reduction(h, g, &step).max(0.0);
    Ok(TrustRegionStep {
        step,
        kind,
        predicted_reduction,
        hit_boundary,
    })
}

fn steihaug(h: &BandedSymmetricMatrix, g: &[f64], radius: f64, settings: &TrustRegionSettings) -> (Vec<f64>, bool) {
    let n = g.len();
    let minv: Vec<f64> = h
        .diagonal()
        .iter()
        .map(|d| 1.0 / (d.abs() + settings.jacobi_shift))
        .collect();
    let gnorm = norm(g);
    let tol = gnorm.sqrt().min(0.5) * gnorm;

    let mut z = vec![0.0; n];
    let mut r = g.to_vec();
    let mut y: Vec<f64> = r.iter().zip(&minv).map(|(a, b)| a * b).collect();
    let mut d: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut ry = dot(&r, &y);

    for _ in 0..settings.pcg_max_iterations {
        let hd = h.mul_vec(&d);
        let curvature = dot(&d, &hd);
        if curvature <= 0.0 {
            let tau = boundary_tau(&z, &d, radius);
            return (axpy(&z, tau, &d), true);
        }
        let alpha = ry / curvature;
        let z_next = axpy(&z, alpha, &d);
        if norm(&z_next) >= radius {
            let tau = boundary_tau(&z, &d, radius);
            return (axpy(&z, tau, &d), true);
        }
        z = z_next;
        for (ri, hdi) in r.iter_mut().zip(&hd) {
            *ri += alpha * hdi;
        }
        if norm(&r) <= tol {
            break;
        }
        y = r.iter().zip(&minv).map(|(a, b)| a * b).collect();
        let ry_next = dot(&r, &y);
        let beta = ry_next / ry;
        ry = ry_next;
        for (di, yi) in d.iter_mut().zip(&y) {
            *di = -yi + beta * *di;
        }
    }
    (z, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acceptance {
    pub accepted: bool,
    pub new_radius: f64,
    pub rho: f64,
}

/// Ratio test on actual versus predicted reduction and the radius update.
pub fn accept_and_update(
    actual_reduction: f64,
    predicted_reduction: f64,
    radius: f64,
    hit_boundary: bool,
    settings: &TrustRegionSettings,
) -> Acceptance {
    let rho = actual_reduction / predicted_reduction.max(f64::MIN_POSITIVE);
    let rho = if rho.is_nan() { f64::NEG_INFINITY } else { rho };
    let accepted = rho >= settings.acceptance_threshold && actual_reduction > 0.0;
    let new_radius = if rho < SHRINK_BELOW {
        radius * settings.shrink_factor
    } else if rho > EXPAND_ABOVE && hit_boundary {
        radius * settings.expand_factor
    } else {
        radius
    };
    Acceptance {
        accepted,
        new_radius,
        rho,
    }
}

/// Minimize `landscape` starting from `init`.
pub fn minimize<L: EnergyLandscape + ?Sized>(
    landscape: &L,
    init: &[f64],
    settings: &TrustRegionSettings,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    if init.len() != landscape.dim() {
        return Err(Error::InvalidInput(format!(
            "initial guess has length {}, expected {}",
            init.len(),
            landscape.dim()
        )));
    }
    if let Some(i) = init.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite initial coordinate {i}")));
    }
    let failure = |e: Error| match e {
        Error::DegenerateGeometry { edge, length } => {
            Error::SolverFailure(format!("edge {edge} collapsed to length {length:e}"))
        }
        other => other,
    };

    let mut x = init.to_vec();
    let mut energy = landscape.energy(&x).map_err(failure)?;
    let mut g = landscape.gradient(&x).map_err(failure)?;
    let mut gnorm = norm(&g);
    let mut radius = settings.initial_radius;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_outer_iterations {
        if gnorm <= settings.gradient_tolerance {
            status = SolveStatus::ConvergedGradient;
            break;
        }
        if radius < settings.radius_floor {
            status = SolveStatus::ConvergedRadius;
            break;
        }
        let h = landscape.hessian(&x).map_err(failure)?;
        let step = trust_region_step(&h, &g, radius, settings)?;
        let actual = landscape.decrease(&x, &step.step).map_err(failure)?;
        let acc = accept_and_update(actual, step.predicted_reduction, radius, step.hit_boundary, settings);
        if acc.accepted {
            for (xi, pi) in x.iter_mut().zip(&step.step) {
                *xi += pi;
            }
            energy -= actual;
            g = landscape.gradient(&x).map_err(failure)?;
            gnorm = norm(&g);
        }
        trace.push(StepRecord {
            rho: acc.rho,
            radius,
            kind: step.kind,
            accepted: acc.accepted,
            energy,
        });
        radius = acc.new_radius;
        iterations += 1;
    }
    if status == SolveStatus::MaxIterations && gnorm <= settings.gradient_tolerance {
        status = SolveStatus::ConvergedGradient;
    }
    Ok(EquilibriumResult {
        q_f_star: x,
        residual_norm: gnorm,
        energy,
        outer_iterations: iterations,
        status,
        step_trace: trace,
    })
}

/// Equilibrium of the strip at fixed clamp coordinates `q_b`, warm-started
/// from `init`.
pub fn solve_equilibrium(
    model: &StripModel,
    q_b: &[f64],
    init: &[f64],
    settings: &TrustRegionSettings,
) -> Result<EquilibriumResult> {
    if q_b.len() != model.boundary_dim() || q_b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("boundary coordinates malformed".into()));
    }
    minimize(&StripLandscape { model, q_b }, init, settings)
}
