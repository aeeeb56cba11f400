//! Cell-wise conductivity coefficients and their four parametrizations.
//!
//! The same positive coefficient field can be carried as the conductivity
//! sigma itself, the resistivity rho = 1/sigma, the natural power
//! mu = sigma^(-q/p) (under which the solution depends linearly on the
//! parameter when tau = 0), or the log-conductivity kappa = log sigma.

use crate::error::SolverError;
use crate::partition::Partition;
use nalgebra::DVector;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    Std,
    Inv,
    Nat,
    Exp,
}

impl Parametrization {
    pub const ALL: [Parametrization; 4] = [
        Parametrization::Std,
        Parametrization::Inv,
        Parametrization::Nat,
        Parametrization::Exp,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Parametrization::Std => "std",
            Parametrization::Inv => "inv",
            Parametrization::Nat => "nat",
            Parametrization::Exp => "exp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "std" => Some(Parametrization::Std),
            "inv" => Some(Parametrization::Inv),
            "nat" => Some(Parametrization::Nat),
            "exp" => Some(Parametrization::Exp),
            _ => None,
        }
    }

    /// Power r with parameter value sigma^r; None for the log parametrization.
    pub fn power(&self, p: f64) -> Option<f64> {
        match self {
            Parametrization::Std => Some(1.0),
            Parametrization::Inv => Some(-1.0),
            Parametrization::Nat => Some(-1.0 / (p - 1.0)),
            Parametrization::Exp => None,
        }
    }

    /// Parameter value at the homogeneous base point sigma = 1.
    pub fn base_value(&self) -> f64 {
        match self {
            Parametrization::Exp => 0.0,
            _ => 1.0,
        }
    }

    pub fn value_from_sigma(&self, sigma: f64, p: f64) -> f64 {
        match self.power(p) {
            Some(r) => sigma.powf(r),
            None => sigma.ln(),
        }
    }

    pub fn sigma_from_value(&self, value: f64, p: f64) -> f64 {
        match self.power(p) {
            Some(r) => value.powf(1.0 / r),
            None => value.exp(),
        }
    }

    pub fn value_from_kappa(&self, kappa: f64, p: f64) -> f64 {
        match self.power(p) {
            Some(r) => (r * kappa).exp(),
            None => kappa,
        }
    }

    /// Log-conductivity recovered from a parameter value: log(x), -log(x),
    /// (1-p) log(x) or the identity.
    pub fn kappa_from_value(&self, value: f64, p: f64) -> f64 {
        match self {
            Parametrization::Std => value.ln(),
            Parametrization::Inv => -value.ln(),
            Parametrization::Nat => (1.0 - p) * value.ln(),
            Parametrization::Exp => value,
        }
    }

    /// Weight multiplying the perturbation in the derivative-problem right
    /// side: 1 for sigma itself, sigma^(1-r)/r for a power parametrization,
    /// sigma for the log parametrization.
    pub fn derivative_weight(&self, sigma: f64, p: f64) -> f64 {
        match self {
            Parametrization::Std => 1.0,
            Parametrization::Exp => sigma,
            _ => {
                let r = self.power(p).expect("power parametrization");
                sigma.powf(1.0 - r) / r
            }
        }
    }

    /// Exponent applied to the Gaussian log-conductivity when forming the
    /// induced log-normal parameter: y = exp(r * kappa). None marks the
    /// parametrization that stays Gaussian.
    pub fn lognormal_exponent(&self, p: f64) -> Option<f64> {
        self.power(p)
    }
}

/// Piecewise-constant coefficient vector over the partition cells, tagged
/// with its parametrization.
#[derive(Clone, Debug)]
pub struct ConductivityField {
    values: DVector<f64>,
    parametrization: Parametrization,
    partition: Arc<Partition>,
}

impl ConductivityField {
    pub fn new(
        partition: Arc<Partition>,
        values: DVector<f64>,
        parametrization: Parametrization,
    ) -> Result<Self, SolverError> {
        if values.len() != partition.n_cells() {
            return Err(SolverError::InvalidConductivity(format!(
                "value count {} does not match cell count {}",
                values.len(),
                partition.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidConductivity(
                "non-finite coefficient".into(),
            ));
        }
        if parametrization != Parametrization::Exp && values.iter().any(|&v| v <= 0.0) {
            return Err(SolverError::InvalidConductivity(format!(
                "{} parametrization requires strictly positive values",
                parametrization.label()
            )));
        }
        Ok(ConductivityField {
            values,
            parametrization,
            partition,
        })
    }

    /// The homogeneous unit conductivity expressed in any parametrization.
    pub fn homogeneous(partition: Arc<Partition>, parametrization: Parametrization) -> Self {
        let v = parametrization.base_value();
        let values = DVector::from_element(partition.n_cells(), v);
        ConductivityField {
            values,
            parametrization,
            partition,
        }
    }

    /// Field with sigma = exp(kappa), expressed in the given parametrization.
    pub fn from_kappa(
        partition: Arc<Partition>,
        kappa: &DVector<f64>,
        parametrization: Parametrization,
        p: f64,
    ) -> Result<Self, SolverError> {
        let values = kappa.map(|k| parametrization.value_from_kappa(k, p));
        ConductivityField::new(partition, values, parametrization)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn parametrization(&self) -> Parametrization {
        self.parametrization
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    /// Conductivity per cell; strictly positive for any parametrization.
    pub fn sigma_cells(&self, p: f64) -> DVector<f64> {
        self.values
            .map(|v| self.parametrization.sigma_from_value(v, p))
    }
}
