//! Matrix-free products with the equilibrium sensitivity `S = −G_x⁻¹ G_z`.

use crate::error::{Error, Result};
use crate::ledger::BudgetLedger;
use crate::linalg::{BandedCholesky, BandedSymmetricMatrix, SparseMatrix};
use crate::solver::EquilibriumResult;
use crate::system::EquilibriumSystem;

/// Relative diagonal shift tried once when the plain factorization fails.
const RETRY_SHIFT: f64 = 1e-12;

/// Factorized `G_x` and sparse `G_z` at one converged equilibrium.
#[derive(Debug, Clone)]
pub struct SensitivityContext {
    factor: BandedCholesky,
    gz: SparseMatrix,
    x: Vec<f64>,
    z: Vec<f64>,
    shifted: bool,
}

impl SensitivityContext {
    pub fn from_parts(gx: &BandedSymmetricMatrix, gz: SparseMatrix, x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if gx.order() != x.len() || gz.rows() != x.len() || gz.cols() != z.len() {
            return Err(Error::InvalidInput("linearization dimensions do not match (x, z)".into()));
        }
        let (factor, shifted) = match gx.cholesky() {
            Ok(f) => (f, false),
            Err(first) => {
                let scale = gx.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
                let mut shifted = gx.clone();
                shifted.add_to_diagonal(RETRY_SHIFT * scale.max(f64::MIN_POSITIVE));
                match shifted.cholesky() {
                    Ok(f) => (f, true),
                    Err(_) => {
                        return Err(Error::SensitivityUnavailable(format!(
                            "G_x is not positive definite ({first})"
                        )))
                    }
                }
            }
        };
        Ok(Self { factor, gz, x, z, shifted })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Whether the retry shift was needed to factorize `G_x`.
    pub fn shifted(&self) -> bool {
        self.shifted
    }

    /// Ratio of largest to smallest Cholesky pivot, squared: a cheap
    /// condition estimate of `G_x`.
    pub fn condition_estimate(&self) -> f64 {
        let r = self.factor.max_pivot() / self.factor.min_pivot();
        r * r
    }

    pub fn free_dim(&self) -> usize {
        self.x.len()
    }

    pub fn boundary_dim(&self) -> usize {
        self.z.len()
    }

    /// `Sᵀ v`: solve `G_x p = v`, return `−G_zᵀ p`.
    pub fn s_transpose_product(&self, v: &[f64], ledger: &BudgetLedger) -> Result<Vec<f64>> {
        if v.len() != self.free_dim() {
            return Err(Error::InvalidInput(format!("expected {} entries, got {}", self.free_dim(), v.len())));
        }
        if let Some(i) = v.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        ledger.add_linear_solves(1);
        let p = self.factor.solve(v);
        Ok(self.gz.transpose_mul_vec(&p).into_iter().map(|e| -e).collect())
    }

    /// `S u`: forward tangent solve `G_x s = −G_z u`.
    pub fn s_product(&self, u: &[f64], ledger: &BudgetLedger) -> Result<Vec<f64>> {
        if u.len() != self.boundary_dim() {
            return Err(Error::InvalidInput(format!("expected {} entries, got {}", self.boundary_dim(), u.len())));
        }
        ledger.add_linear_solves(1);
        let rhs: Vec<f64> = self.gz.mul_vec(u).into_iter().map(|e| -e).collect();
        Ok(self.factor.solve(&rhs))
    }
}

/// Linearize `system` at the converged equilibrium `eq` of boundary `z`.
pub fn build_context<S: EquilibriumSystem + ?Sized>(
    system: &S,
    z: &[f64],
    eq: &EquilibriumResult,
) -> Result<SensitivityContext> {
    if !eq.converged() {
        return Err(Error::SensitivityUnavailable(format!(
            "equilibrium not converged ({:?})",
            eq.status
        )));
    }
    let (gx, gz) = system.linearize(&eq.q_f_star, z)?;
    SensitivityContext::from_parts(&gx, gz, eq.q_f_star.clone(), z.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, DenseMatrix};
    use crate::system::QuadraticSystem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_identity_map() {
        let sys = QuadraticSystem::new(DenseMatrix::from_rows(&[vec![1.0]]), vec![0.0]).unwrap();
        let eq = sys.solve(&[0.3], &[0.0]).unwrap();
        let ctx = build_context(&sys, &[0.3], &eq).unwrap();
        let ledger = BudgetLedger::new();
        assert_eq!(ctx.s_transpose_product(&[2.5], &ledger).unwrap(), vec![2.5]);
        assert_eq!(ledger.counts().linear_solves, 1);
        assert_eq!(ledger.counts().equilibrium_solves, 0);
    }

    #[test]
    fn adjoint_identity_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let sys = QuadraticSystem::new(DenseMatrix::from_rows(&rows), vec![0.0; 6]).unwrap();
        let z = [0.1, 0.2, 0.3];
        let ctx = build_context(&sys, &z, &sys.solve(&z, &[0.0; 6]).unwrap()).unwrap();
        let ledger = BudgetLedger::new();
        let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v1: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v2: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let su = ctx.s_product(&u, &ledger).unwrap();
        let stv = ctx.s_transpose_product(&v1, &ledger).unwrap();
        assert!((dot(&su, &v1) - dot(&u, &stv)).abs() < 1e-12);
        let combo: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = ctx.s_transpose_product(&combo, &ledger).unwrap();
        let r2 = ctx.s_transpose_product(&v2, &ledger).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - (2.0 * stv[i] - 0.5 * r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_linearization_is_rejected() {
        let gx = BandedSymmetricMatrix::from_diagonal(&[1.0, -1e-3, 2.0]);
        let gz = SparseMatrix::from_triplets(3, 1, vec![(0, 0, 1.0)]);
        let err = SensitivityContext::from_parts(&gx, gz, vec![0.0; 3], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::SensitivityUnavailable(_)));
    }
}
