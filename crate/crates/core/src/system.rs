//! Equilibrium systems `𝒢(x, z) = ∇ₓE(x, z) = 0` seen through the two
//! operations the rollout and adjoint code need: a warm-started solve and a
//! linearization at a converged point.

use crate::error::{Error, Result};
use crate::linalg::{BandedSymmetricMatrix, DenseMatrix, SparseMatrix};
use crate::solver::{self, EquilibriumResult, SolveStatus, TrustRegionSettings};
use crate::strip::{self, StripModel};

pub trait EquilibriumSystem: Sync {
    fn free_dim(&self) -> usize;
    fn boundary_dim(&self) -> usize;

    /// Converged equilibrium at boundary coordinates `z`, warm-started from
    /// `init`. Anything short of a gradient-converged solve is an error.
    fn solve(&self, z: &[f64], init: &[f64]) -> Result<EquilibriumResult>;

    /// `(G_x, G_z)` at `(x, z)`.
    fn linearize(&self, x: &[f64], z: &[f64]) -> Result<(BandedSymmetricMatrix, SparseMatrix)>;
}

#[derive(Debug, Clone)]
pub struct StripSystem {
    pub model: StripModel,
    pub settings: TrustRegionSettings,
}

impl StripSystem {
    pub fn new(model: StripModel, settings: TrustRegionSettings) -> Self {
        Self { model, settings }
    }
}

impl EquilibriumSystem for StripSystem {
    fn free_dim(&self) -> usize {
        self.model.free_dim()
    }

    fn boundary_dim(&self) -> usize {
        self.model.boundary_dim()
    }

    fn solve(&self, z: &[f64], init: &[f64]) -> Result<EquilibriumResult> {
        let eq = solver::solve_equilibrium(&self.model, z, init, &self.settings)?;
        if eq.status != SolveStatus::ConvergedGradient {
            return Err(Error::SolverFailure(format!(
                "{:?} after {} iterations, residual {:e}",
                eq.status, eq.outer_iterations, eq.residual_norm
            )));
        }
        Ok(eq)
    }

    fn linearize(&self, x: &[f64], z: &[f64]) -> Result<(BandedSymmetricMatrix, SparseMatrix)> {
        strip::linearize_of(&self.model, z, x)
    }
}

/// `E = ½‖x − M z − c‖²`: the equilibrium map is affine, so its
/// sensitivity `S = M` is constant.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub map: DenseMatrix,
    pub offset: Vec<f64>,
}

impl QuadraticSystem {
    pub fn new(map: DenseMatrix, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != map.rows() {
            return Err(Error::InvalidInput("offset length must equal map rows".into()));
        }
        Ok(Self { map, offset })
    }

    pub fn equilibrium(&self, z: &[f64]) -> Vec<f64> {
        self.map.mul_vec(z).iter().zip(&self.offset).map(|(a, b)| a + b).collect()
    }
}

impl EquilibriumSystem for QuadraticSystem {
    fn free_dim(&self) -> usize {
        self.map.rows()
    }

    fn boundary_dim(&self) -> usize {
        self.map.cols()
    }

    fn solve(&self, z: &[f64], init: &[f64]) -> Result<EquilibriumResult> {
        if z.len() != self.boundary_dim() || init.len() != self.free_dim() {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        let x = self.equilibrium(z);
        let energy = 0.0;
        Ok(EquilibriumResult {
            q_f_star: x,
            residual_norm: 0.0,
            energy,
            outer_iterations: 0,
            status: SolveStatus::ConvergedGradient,
            step_trace: Vec::new(),
        })
    }

    fn linearize(&self, _x: &[f64], _z: &[f64]) -> Result<(BandedSymmetricMatrix, SparseMatrix)> {
        let gx = BandedSymmetricMatrix::identity(self.free_dim());
        let mut neg = self.map.clone();
        for r in 0..neg.rows() {
            for c in 0..neg.cols() {
                neg.set(r, c, -self.map.get(r, c));
            }
        }
        Ok((gx, SparseMatrix::from_dense(&neg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_system_solves_in_closed_form() {
        let sys = QuadraticSystem::new(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0], vec![3.0, 0.5]]), vec![0.1, 0.2, 0.3]).unwrap();
        let eq = sys.solve(&[1.0, -1.0], &[0.0; 3]).unwrap();
        assert_eq!(eq.q_f_star, vec![-0.9, 1.2, 2.8]);
        let (gx, gz) = sys.linearize(&eq.q_f_star, &[1.0, -1.0]).unwrap();
        assert_eq!(gx.get(2, 2), 1.0);
        assert_eq!(gz.to_dense().get(0, 1), -2.0);
    }

    #[test]
    fn strip_system_rejects_unconverged_solves() {
        let model = StripModel::new(&strip::StripParams { node_count: 11, ..Default::default() }).unwrap();
        let settings = TrustRegionSettings {
            max_outer_iterations: 1,
            ..Default::default()
        };
        let sys = StripSystem::new(model.clone(), settings);
        let mut cfg = model.straight_configuration([0.0, 0.0]);
        cfg.q_b[5] += 0.01;
        cfg.q_b[7] += 0.01;
        assert!(matches!(sys.solve(&cfg.q_b, &cfg.q_f), Err(Error::SolverFailure(_))));
    }
}
