//! One-step linearized MAP reconstruction.
//!
//! Minimizes `|V - (U0 + J(x - x0))|^2 + lambda^2 (x - xbar)^T Sigma^-1 (x - xbar)`
//! for the parameter vector x of the Jacobian's parametrization. The solve
//! substitutes x = xbar + L z with Sigma = L L^T, which turns the normal
//! equations into `(B^T B + lambda^2 I) z = B^T d` with B = J L — the same
//! minimizer without explicitly inverting the nearly singular prior
//! covariance. Iterative refinement drives the stationarity residual below
//! 1e-10 relative.

use crate::conductivity::Parametrization;
use crate::error::ReconstructError;
use crate::measurement::MeasurementVector;
use crate::prior::jittered_cholesky;
use crate::sensitivity::JacobianMatrix;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Log-conductivity recovered from a reconstruction, with the count of cells
/// clipped to the positivity floor.
#[derive(Clone, Debug)]
pub struct LogConductivity {
    pub kappa: DVector<f64>,
    pub clipped: usize,
}

/// Shared factorization for reconstructing many measurements with the same
/// (J, U0, prior, lambda).
pub struct OneStepOperator {
    prior_l: DMatrix<f64>,
    b: DMatrix<f64>,
    normal: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    prior_mean: DVector<f64>,
    /// U0 + J (xbar - x0)
    offset: DVector<f64>,
    pub condition_estimate: f64,
}

const MAX_CONDITION: f64 = 1e14;
const STATIONARITY_TOL: f64 = 1e-10;

impl OneStepOperator {
    pub fn new(
        jac: &JacobianMatrix,
        u0: &MeasurementVector,
        prior_mean: &DVector<f64>,
        prior_cov: &DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self, ReconstructError> {
        if !(lambda > 0.0) {
            return Err(ReconstructError::InvalidLambda(lambda));
        }
        let m = jac.cols();
        if u0.len() != jac.rows() {
            return Err(ReconstructError::DimensionMismatch(format!(
                "U0 has {} entries, Jacobian has {} rows",
                u0.len(),
                jac.rows()
            )));
        }
        if prior_mean.len() != m || prior_cov.nrows() != m || prior_cov.ncols() != m {
            return Err(ReconstructError::DimensionMismatch(format!(
                "prior dimensions do not match {} cells",
                m
            )));
        }

        let prior_chol =
            jittered_cholesky(prior_cov, 1e-10).map_err(|_| ReconstructError::FactorizationFailure)?;
        let prior_l: DMatrix<f64> = prior_chol.l();
        let b = &jac.matrix * &prior_l;
        let mut normal = b.transpose() * &b;
        for i in 0..m {
            normal[(i, i)] += lambda * lambda;
        }
        let chol = Cholesky::new(normal.clone()).ok_or(ReconstructError::FactorizationFailure)?;

        let condition_estimate = estimate_condition(&normal, &chol);
        if condition_estimate > MAX_CONDITION {
            return Err(ReconstructError::IllConditioned {
                estimate: condition_estimate,
            });
        }

        let x0 = DVector::from_element(m, jac.parametrization.base_value());
        let offset = u0.values() + &jac.matrix * (prior_mean - &x0);
        Ok(OneStepOperator {
            prior_l,
            b,
            normal,
            chol,
            prior_mean: prior_mean.clone(),
            offset,
            condition_estimate,
        })
    }

    /// Minimizer of the regularized linearized misfit for one measurement.
    pub fn reconstruct(&self, v: &MeasurementVector) -> Result<DVector<f64>, ReconstructError> {
        if v.len() != self.offset.len() {
            return Err(ReconstructError::DimensionMismatch(format!(
                "measurement has {} entries, expected {}",
                v.len(),
                self.offset.len()
            )));
        }
        let d = v.values() - &self.offset;
        let rhs = self.b.transpose() * d;
        let rhs_norm = rhs.norm();
        let mut z = self.chol.solve(&rhs);
        if rhs_norm > 0.0 {
            // iterative refinement until stationarity holds to 1e-10
            let mut ok = false;
            for _ in 0..8 {
                let r = &rhs - &self.normal * &z;
                if r.norm() <= STATIONARITY_TOL * rhs_norm {
                    ok = true;
                    break;
                }
                z += self.chol.solve(&r);
            }
            if !ok {
                return Err(ReconstructError::IllConditioned {
                    estimate: self.condition_estimate,
                });
            }
        }
        Ok(&self.prior_mean + &self.prior_l * z)
    }
}

/// Condition estimate of the SPD normal matrix via power iteration and
/// factorized inverse iteration.
fn estimate_condition(normal: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let m = normal.nrows();
    let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let mut lambda_max: f64 = 0.0;
    for _ in 0..20 {
        v = normal * &v;
        lambda_max = v.norm();
        if lambda_max == 0.0 {
            return 1.0;
        }
        v /= lambda_max;
    }
    let mut w = DVector::from_fn(m, |i, _| ((i * 2654435761) % 97) as f64 / 97.0 - 0.5);
    w /= w.norm();
    let mut inv_norm: f64 = 0.0;
    for _ in 0..20 {
        w = chol.solve(&w);
        inv_norm = w.norm();
        w /= inv_norm;
    }
    lambda_max * inv_norm
}

/// One-shot reconstruction; see [`OneStepOperator`] for the shared-factor
/// variant.
pub fn one_step_map(
    v: &MeasurementVector,
    jac: &JacobianMatrix,
    u0: &MeasurementVector,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>, ReconstructError> {
    OneStepOperator::new(jac, u0, prior_mean, prior_cov, lambda)?.reconstruct(v)
}

/// Convert a reconstructed parameter vector to log-conductivity. Cells that
/// violate positivity are clipped to `floor` for the conversion only and
/// counted.
pub fn to_log_conductivity(
    x: &DVector<f64>,
    parametrization: Parametrization,
    p: f64,
    floor: f64,
) -> LogConductivity {
    let mut clipped = 0;
    let kappa = DVector::from_fn(x.len(), |i, _| {
        let v = if parametrization != Parametrization::Exp && x[i] < floor {
            clipped += 1;
            floor
        } else {
            x[i]
        };
        parametrization.kappa_from_value(v, p)
    });
    if clipped > 0 {
        log::warn!(
            "{} of {} cells clipped to {floor:.1e} before log-conversion",
            clipped,
            x.len()
        );
    }
    LogConductivity { kappa, clipped }
}
