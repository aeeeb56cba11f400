//! Pointwise smoothed p-energy kernel.
//!
//! The scalar density is `phi(x) = (tau^2 + |x|^2)^(p/2) / p` with gradient
//! `(tau^2 + |x|^2)^((p-2)/2) x`; its Hessian decomposes as `a*I + b*x*x^T`.
//! The FEM assembly consumes the scalar coefficient helpers on `|x|^2`
//! directly, while the vector/matrix wrappers serve general n and the
//! inequality verifier.

use crate::error::EnergyError;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exponent pair (p, tau) with p > 1 and tau >= 0 enforced at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParams {
    p: f64,
    tau: f64,
}

impl EnergyParams {
    pub fn new(p: f64, tau: f64) -> Result<Self, EnergyError> {
        if !p.is_finite() || p <= 1.0 || !tau.is_finite() || tau < 0.0 {
            return Err(EnergyError::InvalidParams { p, tau });
        }
        Ok(Self { p, tau })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Conjugate exponent q = p/(p-1).
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Energy density as a function of the squared argument norm.
    pub fn phi_from_sq(&self, s2: f64) -> f64 {
        (self.tau * self.tau + s2).powf(0.5 * self.p) / self.p
    }

    /// Scalar factor of the gradient, `(tau^2 + s2)^((p-2)/2)`.
    ///
    /// The factor only ever multiplies the argument vector itself, so at the
    /// degenerate origin (tau = 0, s2 = 0) the product limit is zero and 0 is
    /// returned for every p.
    pub fn grad_scale(&self, s2: f64) -> f64 {
        let t = self.tau * self.tau + s2;
        if t == 0.0 {
            0.0
        } else {
            t.powf(0.5 * (self.p - 2.0))
        }
    }

    /// Hessian coefficients (a, b) with `H = a*I + b*x*x^T`.
    ///
    /// Returns `None` at the singular point tau = 0, x = 0 for p != 2.
    pub fn hessian_coeffs(&self, s2: f64) -> Option<(f64, f64)> {
        let t = self.tau * self.tau + s2;
        if t == 0.0 {
            if self.p == 2.0 {
                Some((1.0, 0.0))
            } else {
                None
            }
        } else {
            let a = t.powf(0.5 * (self.p - 2.0));
            let b = (self.p - 2.0) * t.powf(0.5 * (self.p - 4.0));
            Some((a, b))
        }
    }

    /// Hessian coefficients with the tau = 0 gradient-magnitude floor used by
    /// the tangent assembly. When tau > 0 no floor is applied.
    pub fn hessian_coeffs_floored(&self, s2: f64, eps_reg: f64) -> (f64, f64) {
        if self.p == 2.0 {
            return (1.0, 0.0);
        }
        let s2 = if self.tau == 0.0 {
            s2.max(eps_reg * eps_reg)
        } else {
            s2
        };
        let t = self.tau * self.tau + s2;
        let a = t.powf(0.5 * (self.p - 2.0));
        let b = (self.p - 2.0) * t.powf(0.5 * (self.p - 4.0));
        (a, b)
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Energy density `phi(x) = (tau^2 + |x|^2)^(p/2) / p`.
pub fn phi(x: &[f64], params: &EnergyParams) -> f64 {
    params.phi_from_sq(norm_sq(x))
}

/// Gradient `(tau^2 + |x|^2)^((p-2)/2) x`, with the zero-vector limit at the
/// degenerate origin.
pub fn grad_phi(x: &[f64], params: &EnergyParams) -> Vec<f64> {
    let s = params.grad_scale(norm_sq(x));
    x.iter().map(|v| s * v).collect()
}

/// Hessian `(tau^2+|x|^2)^((p-2)/2) I + (p-2)(tau^2+|x|^2)^((p-4)/2) x x^T`.
pub fn hessian_phi(x: &[f64], params: &EnergyParams) -> Result<DMatrix<f64>, EnergyError> {
    let (a, b) = params
        .hessian_coeffs(norm_sq(x))
        .ok_or(EnergyError::SingularPoint { p: params.p() })?;
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = b * x[i] * x[j];
        }
        h[(i, i)] += a;
    }
    Ok(h)
}

/// Largest absolute entry of the third-derivative tensor of phi at x.
///
/// Entries are `(p-2) t^((p-4)/2) (x_l d_jk + x_j d_kl + x_k d_jl)
/// + (p-2)(p-4) t^((p-6)/2) x_j x_k x_l` with t = tau^2 + |x|^2; the formula
/// is cross-checked against finite differences of the Hessian in the tests.
pub fn third_derivative_max(x: &[f64], params: &EnergyParams) -> Result<f64, EnergyError> {
    let s2 = norm_sq(x);
    let t = params.tau() * params.tau() + s2;
    if t == 0.0 {
        return Err(EnergyError::SingularPoint { p: params.p() });
    }
    let p = params.p();
    let c1 = (p - 2.0) * t.powf(0.5 * (p - 4.0));
    let c2 = (p - 2.0) * (p - 4.0) * t.powf(0.5 * (p - 6.0));
    let n = x.len();
    let mut max_abs: f64 = 0.0;
    for j in 0..n {
        for k in j..n {
            for l in k..n {
                let mut delta_sum = 0.0;
                if j == k {
                    delta_sum += x[l];
                }
                if k == l {
                    delta_sum += x[j];
                }
                if j == l {
                    delta_sum += x[k];
                }
                let entry = c1 * delta_sum + c2 * x[j] * x[k] * x[l];
                max_abs = max_abs.max(entry.abs());
            }
        }
    }
    Ok(max_abs)
}

/// Summary of one inequality over the verification sweep.
#[derive(Clone, Debug)]
pub struct CheckSummary {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// Smallest normalized slack seen; negative means a violation.
    pub worst_margin: f64,
}

/// Constants calibrated for the inequalities the source bounds leave
/// unspecified (third-derivative, monotonicity, Lipschitz).
#[derive(Clone, Copy, Debug)]
pub struct CalibratedConstants {
    pub c_third: f64,
    pub c_monotone: f64,
    pub c_lipschitz: f64,
}

#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub checks: Vec<CheckSummary>,
    pub constants: CalibratedConstants,
    pub samples: usize,
}

impl InequalityReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

/// Relative slack below which an inequality counts as violated. Several of
/// the bounds are attained exactly (e.g. the spectral bound at y = x), so a
/// small rounding allowance is required.
const REL_TOL: f64 = 1e-9;

const INEQ_NAMES: [&'static str; 8] = [
    "positive-definite-bound",
    "spectral-norm-bound",
    "third-derivative-bound",
    "convexity",
    "monotonicity",
    "lipschitz",
    "growth-q",
    "growth-split",
];

struct Tally {
    checked: [usize; 8],
    violations: [usize; 8],
    worst: [f64; 8],
    first_violation: Option<EnergyError>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checked: [0; 8],
            violations: [0; 8],
            worst: [f64::INFINITY; 8],
            first_violation: None,
        }
    }

    fn record(&mut self, idx: usize, lhs: f64, rhs: f64, cx: &[f64; 2], cy: &[f64; 2], p: f64, tau: f64) {
        self.checked[idx] += 1;
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let margin = (rhs - lhs) / scale;
        if margin < self.worst[idx] {
            self.worst[idx] = margin;
        }
        if margin < -REL_TOL {
            self.violations[idx] += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(EnergyError::InequalityViolation {
                    name: INEQ_NAMES[idx],
                    x: *cx,
                    y: *cy,
                    p,
                    tau,
                    lhs,
                    rhs,
                });
            }
        }
    }
}

struct Calibration {
    c_third: f64,
    c_monotone: f64,
    c_lipschitz: f64,
}

fn spectral_norm_2x2(h: &DMatrix<f64>) -> f64 {
    let (h11, h12, h22) = (h[(0, 0)], h[(0, 1)], h[(1, 1)]);
    let mid = 0.5 * (h11 + h22);
    let rad = (0.25 * (h11 - h22) * (h11 - h22) + h12 * h12).sqrt();
    (mid + rad).abs().max((mid - rad).abs())
}

/// One sampled tuple; `calibrate` updates the constants instead of checking
/// the calibrated inequalities.
fn check_tuple(
    x: [f64; 2],
    y: [f64; 2],
    p: f64,
    tau: f64,
    cal: &mut Calibration,
    tally: Option<&mut Tally>,
) {
    let params = EnergyParams::new(p, tau).expect("sampled params are valid");
    let gx = norm_sq(&x);
    let gy = norm_sq(&y);
    let t_x = tau * tau + gx;
    let dphi_x = grad_phi(&x, &params);
    let dphi_y = grad_phi(&y, &params);

    let mut tally = tally;

    // Hessian-based bounds need a regular point.
    if t_x > 0.0 {
        let h = hessian_phi(&x, &params).expect("regular point");
        let quad = y[0] * (h[(0, 0)] * y[0] + h[(0, 1)] * y[1])
            + y[1] * (h[(1, 0)] * y[0] + h[(1, 1)] * y[1]);
        let lower = t_x.powf(0.5 * (p - 4.0)) * (tau * tau + (p - 1.0f64).min(1.0) * gx) * norm_sq(&y);
        if let Some(t) = tally.as_deref_mut() {
            t.record(0, lower, quad, &x, &y, p, tau);
        }

        let spec = spectral_norm_2x2(&h);
        let spec_bound = (1.0f64).max(p - 1.0) * t_x.powf(0.5 * (p - 2.0));
        if let Some(t) = tally.as_deref_mut() {
            t.record(1, spec, spec_bound, &x, &y, p, tau);
        }

        let third = third_derivative_max(&x, &params).expect("regular point");
        let third_base = t_x.powf(0.5 * (p - 3.0));
        if third_base > 0.0 && third_base.is_finite() {
            let ratio = third / third_base;
            match tally.as_deref_mut() {
                None => cal.c_third = cal.c_third.max(ratio),
                Some(t) => t.record(2, third, cal.c_third * 1.05 * third_base, &x, &y, p, tau),
            }
        }
    }

    // Convexity: graph above the tangent plane.
    let tangent = phi(&x, &params)
        + dphi_x[0] * (y[0] - x[0])
        + dphi_x[1] * (y[1] - x[1]);
    if let Some(t) = tally.as_deref_mut() {
        t.record(3, tangent, phi(&y, &params), &x, &y, p, tau);
    }

    // Monotonicity and Lipschitz-type bounds on the gradient difference.
    let dx = [x[0] - y[0], x[1] - y[1]];
    let diff2 = norm_sq(&dx);
    if diff2 > 0.0 {
        let t_xy = tau * tau + gx + gy;
        let dd = [dphi_x[0] - dphi_y[0], dphi_x[1] - dphi_y[1]];
        let inner = dd[0] * dx[0] + dd[1] * dx[1];
        let mono_lhs = t_xy.powf(0.5 * (p - 2.0)) * diff2;
        match tally.as_deref_mut() {
            None => {
                if inner > 0.0 {
                    cal.c_monotone = cal.c_monotone.max(mono_lhs / inner);
                }
            }
            Some(t) => t.record(4, mono_lhs, cal.c_monotone * 1.05 * inner, &x, &y, p, tau),
        }

        let lip_lhs = norm_sq(&dd).sqrt();
        let lip_base = t_xy.powf(0.5 * (p - 2.0)) * diff2.sqrt();
        match tally.as_deref_mut() {
            None => {
                if lip_base > 0.0 {
                    cal.c_lipschitz = cal.c_lipschitz.max(lip_lhs / lip_base);
                }
            }
            Some(t) => t.record(5, lip_lhs, cal.c_lipschitz * 1.05 * lip_base, &x, &y, p, tau),
        }
    }

    // Growth: |Dphi|^q <= p*phi <= 2^(p/2) (tau^p + |x|^p).
    let q = params.q();
    let grad_norm = norm_sq(&dphi_x).sqrt();
    let p_phi = p * phi(&x, &params);
    if let Some(t) = tally.as_deref_mut() {
        t.record(6, grad_norm.powf(q), p_phi, &x, &y, p, tau);
        let split = (2.0f64).powf(0.5 * p) * (tau.powf(p) + gx.powf(0.5 * p));
        t.record(6, p_phi, split, &x, &y, p, tau);
    }

    // Split gradient growth, valid for p >= 2 only.
    if p >= 2.0 {
        if let Some(t) = tally.as_deref_mut() {
            let rhs = (2.0f64).powf(0.5 * (p - 2.0))
                * (tau.powf(p - 2.0) * gx.sqrt() + gx.sqrt().powf(p - 1.0));
            t.record(7, grad_norm, rhs, &x, &y, p, tau);
        }
    }
}

fn sample_point<R: Rng>(rng: &mut R) -> [f64; 2] {
    if rng.random::<f64>() < 0.04 {
        return [0.0, 0.0];
    }
    let mag = 10f64.powf(rng.random_range(-6.0..3.0));
    let ang = rng.random_range(0.0..std::f64::consts::TAU);
    [mag * ang.cos(), mag * ang.sin()]
}

fn sample_tuple<R: Rng>(rng: &mut R, p_range: (f64, f64), tau_range: (f64, f64)) -> ([f64; 2], [f64; 2], f64, f64) {
    let p = rng.random_range(p_range.0..=p_range.1);
    let tau = if tau_range.0 == 0.0 && rng.random::<f64>() < 0.25 {
        0.0
    } else {
        let u: f64 = rng.random();
        tau_range.0 + u * u * (tau_range.1 - tau_range.0)
    };
    let x = sample_point(rng);
    let roll: f64 = rng.random();
    let y = if roll < 0.05 {
        x
    } else if roll < 0.20 {
        // near-coincident pair; sharpens the difference-quotient constants
        let eps = 10f64.powf(rng.random_range(-8.0..-1.0));
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let scale = norm_sq(&x).sqrt().max(1e-6);
        [x[0] + eps * scale * ang.cos(), x[1] + eps * scale * ang.sin()]
    } else {
        sample_point(rng)
    };
    (x, y, p, tau)
}

/// Deterministic corner cases fed to both the calibration and verification
/// passes: exact coincidence, antipodes, orthogonal pairs, extreme scales.
fn structured_tuples(p_range: (f64, f64), tau_range: (f64, f64)) -> Vec<([f64; 2], [f64; 2], f64, f64)> {
    let ps = [p_range.0, 1.5f64.clamp(p_range.0, p_range.1), 2.0f64.clamp(p_range.0, p_range.1), 3.0f64.clamp(p_range.0, p_range.1), p_range.1];
    let taus = [tau_range.0, 0.5 * (tau_range.0 + tau_range.1), tau_range.1];
    let xs: [[f64; 2]; 6] = [
        [0.0, 0.0],
        [1e-6, 0.0],
        [1.0, 0.0],
        [0.6, -0.8],
        [1e3, 0.0],
        [300.0, -400.0],
    ];
    let mut out = Vec::new();
    for &p in &ps {
        for &tau in &taus {
            for &x in &xs {
                let ys: [[f64; 2]; 5] = [
                    x,
                    [x[0] * (1.0 + 1e-7), x[1] * (1.0 + 1e-7)],
                    [-x[0], -x[1]],
                    [-x[1], x[0]],
                    [0.0, 0.0],
                ];
                for &y in &ys {
                    out.push((x, y, p, tau));
                }
            }
        }
    }
    out
}

/// Randomized verification of the kernel inequalities.
///
/// Draws `n_samples` tuples (x, y, p, tau), after first calibrating the
/// unspecified constants on an independent stream, and checks every bound.
/// Returns the per-inequality tallies, or the first violating witness.
pub fn verify_inequalities(
    n_samples: usize,
    seed: u64,
    p_range: (f64, f64),
    tau_range: (f64, f64),
) -> Result<InequalityReport, EnergyError> {
    assert!(n_samples >= 1, "need at least one sample");
    assert!(p_range.0 > 1.0 && p_range.1 >= p_range.0, "p range must lie in (1, inf)");
    assert!(tau_range.0 >= 0.0 && tau_range.1 >= tau_range.0, "tau range must be nonnegative");

    let mut cal = Calibration {
        c_third: 0.0,
        c_monotone: 0.0,
        c_lipschitz: 0.0,
    };

    let structured = structured_tuples(p_range, tau_range);

    // Calibration pass on its own stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n_cal = 20_000.max(n_samples / 4).min(200_000);
    for &(x, y, p, tau) in &structured {
        check_tuple(x, y, p, tau, &mut cal, None);
    }
    for _ in 0..n_cal {
        let (x, y, p, tau) = sample_tuple(&mut rng, p_range, tau_range);
        check_tuple(x, y, p, tau, &mut cal, None);
    }

    // Verification pass.
    let mut tally = Tally::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &(x, y, p, tau) in &structured {
        check_tuple(x, y, p, tau, &mut cal, Some(&mut tally));
    }
    for _ in 0..n_samples {
        let (x, y, p, tau) = sample_tuple(&mut rng, p_range, tau_range);
        check_tuple(x, y, p, tau, &mut cal, Some(&mut tally));
    }

    if let Some(err) = tally.first_violation {
        return Err(err);
    }

    let checks = (0..8)
        .map(|i| CheckSummary {
            name: INEQ_NAMES[i],
            checked: tally.checked[i],
            violations: tally.violations[i],
            worst_margin: tally.worst[i],
        })
        .collect();
    Ok(InequalityReport {
        checks,
        constants: CalibratedConstants {
            c_third: cal.c_third,
            c_monotone: cal.c_monotone,
            c_lipschitz: cal.c_lipschitz,
        },
        samples: n_samples,
    })
}
