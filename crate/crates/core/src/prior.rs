//! Gaussian random-field prior over the cell-wise log-conductivity.
//!
//! The covariance is the squared-exponential kernel on the cell centers,
//! `varsigma^2 exp(-|x_i - x_j|^2 / (2 b^2))`. Long correlation lengths make
//! the matrix numerically rank-deficient, so factorizations escalate a
//! diagonal jitter up to 1e-10 * varsigma^2 before giving up. The log-normal
//! moment formulas are cross-checked against Monte Carlo in the tests.

use crate::error::PriorError;
use crate::partition::Partition;
use crate::seed::{derive_seed, Stream};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// The six hyperparameter pairs used by the experiment suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum SampleId {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl SampleId {
    pub const ALL: [SampleId; 6] = [
        SampleId::A,
        SampleId::B,
        SampleId::C,
        SampleId::D,
        SampleId::E,
        SampleId::F,
    ];

    pub fn varsigma2(&self) -> f64 {
        match self {
            SampleId::A | SampleId::B => 0.25,
            SampleId::C | SampleId::D => 1.0,
            SampleId::E | SampleId::F => 0.01,
        }
    }

    pub fn corr_len(&self) -> f64 {
        match self {
            SampleId::A | SampleId::C | SampleId::E => 1.0 / 3.0,
            SampleId::B | SampleId::D | SampleId::F => 2.0 / 3.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SampleId::A => "A",
            SampleId::B => "B",
            SampleId::C => "C",
            SampleId::D => "D",
            SampleId::E => "E",
            SampleId::F => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Some(SampleId::A),
            "B" => Some(SampleId::B),
            "C" => Some(SampleId::C),
            "D" => Some(SampleId::D),
            "E" => Some(SampleId::E),
            "F" => Some(SampleId::F),
            _ => None,
        }
    }
}

/// Squared-exponential covariance over the partition cells.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    varsigma2: f64,
    corr_len: f64,
    matrix: DMatrix<f64>,
}

impl CovarianceModel {
    pub fn varsigma2(&self) -> f64 {
        self.varsigma2
    }

    pub fn corr_len(&self) -> f64 {
        self.corr_len
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn covariance_matrix(
    partition: &Partition,
    varsigma2: f64,
    b: f64,
) -> Result<CovarianceModel, PriorError> {
    if !(varsigma2 > 0.0) || !(b > 0.0) {
        return Err(PriorError::InvalidHyperparameters(format!(
            "need varsigma2 > 0 and b > 0, got {varsigma2}, {b}"
        )));
    }
    let centers = partition.centroids();
    let m = centers.len();
    let mut matrix = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let d2 = (centers[i] - centers[j]).norm_squared();
            let v = varsigma2 * (-d2 / (2.0 * b * b)).exp();
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(CovarianceModel {
        varsigma2,
        corr_len: b,
        matrix,
    })
}

pub fn covariance_for_sample(
    partition: &Partition,
    sample: SampleId,
) -> Result<CovarianceModel, PriorError> {
    covariance_matrix(partition, sample.varsigma2(), sample.corr_len())
}

/// Cholesky factor of an SPD matrix, escalating a relative diagonal jitter
/// up to `max_rel_jitter` times the largest diagonal entry.
pub fn jittered_cholesky(
    matrix: &DMatrix<f64>,
    max_rel_jitter: f64,
) -> Result<Cholesky<f64, Dyn>, PriorError> {
    let scale = matrix.diagonal().amax();
    let mut jitter = 0.0;
    loop {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 {
            scale * 1e-14
        } else {
            jitter * 10.0
        };
        if jitter > scale * max_rel_jitter {
            return Err(PriorError::FactorizationFailure);
        }
    }
}

/// Draw n i.i.d. samples of the zero-mean Gaussian field; member k is
/// reproducible on its own from (rng_seed, k).
pub fn sample_logconductivity(
    model: &CovarianceModel,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<DVector<f64>>, PriorError> {
    let chol = jittered_cholesky(&model.matrix, 1e-10)?;
    let l = chol.l();
    let m = model.dim();
    let draws: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, Stream::Member, k as u64));
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            &l * z
        })
        .collect();
    Ok(draws)
}

/// Mean and covariance of y = exp(r * kappa) for kappa ~ N(0, Sigma):
/// `mean_i = exp(r^2 S_ii / 2)`,
/// `cov_ij = mean_i mean_j (exp(r^2 S_ij) - 1)`.
pub fn lognormal_moments(model: &CovarianceModel, r_tilde: f64) -> (DVector<f64>, DMatrix<f64>) {
    let s = &model.matrix;
    let m = model.dim();
    let r2 = r_tilde * r_tilde;
    let mean = DVector::from_fn(m, |i, _| (0.5 * r2 * s[(i, i)]).exp());
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = mean[i] * mean[j] * ((r2 * s[(i, j)]).exp() - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}
