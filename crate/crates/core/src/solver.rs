//! Damped Newton solver for the discrete nonlinear Neumann problem.
//!
//! The initial iterate is the solution of the linear p = 2 problem; when the
//! target exponent is far from 2 the solver walks through intermediate
//! exponents. Each Newton step factors the SPD tangent, then halves the step
//! until the residual norm decreases.

use crate::conductivity::ConductivityField;
use crate::energy::EnergyParams;
use crate::error::SolverError;
use crate::fem::{BoundaryCurrent, FemContext, NodalField};
use nalgebra::DVector;

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SolverOptions {
    /// Relative residual tolerance (against the load norm).
    pub tol: f64,
    /// Newton step budget per continuation stage.
    pub max_newton_steps: usize,
    /// Line-search halvings before declaring divergence.
    pub max_halvings: usize,
    /// Insert intermediate exponents when |p - 2| exceeds this.
    pub continuation_threshold: f64,
    /// Gradient-magnitude floor for the tau = 0 tangent.
    pub eps_reg: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_newton_steps: 50,
            max_halvings: 30,
            continuation_threshold: 0.75,
            eps_reg: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonStep {
    pub stage_p: f64,
    pub step: usize,
    pub residual: f64,
    pub damping: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct NewtonDiagnostics {
    /// Accepted Newton steps over all continuation stages.
    pub steps: usize,
    pub final_residual: f64,
    pub load_norm: f64,
    pub trace: Vec<NewtonStep>,
}

#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub field: NodalField,
    pub diagnostics: NewtonDiagnostics,
}

/// Exponent ladder from 2 to the target; empty interior when the target is
/// within the continuation threshold.
fn continuation_stages(p: f64, threshold: f64) -> Vec<f64> {
    if p == 2.0 {
        return vec![2.0];
    }
    let d = p - 2.0;
    let segments = (d.abs() / threshold).ceil().max(1.0) as usize;
    let mut stages = vec![2.0];
    for k in 1..=segments {
        stages.push(2.0 + d * k as f64 / segments as f64);
    }
    stages
}

struct StageOutcome {
    steps: usize,
    residual: f64,
}

fn newton_stage(
    fem: &FemContext,
    sigma_tri: &[f64],
    params: &EnergyParams,
    load: &DVector<f64>,
    load_norm: f64,
    u: &mut DVector<f64>,
    opts: &SolverOptions,
    stage_tol: f64,
    current: &BoundaryCurrent,
    trace: &mut Vec<NewtonStep>,
) -> Result<StageOutcome, SolverError> {
    let mut residual = fem.assemble_residual(sigma_tri, params, u) - load;
    let mut rn = residual.norm();
    let target = stage_tol * load_norm;
    let mut steps = 0;
    loop {
        if rn <= target {
            return Ok(StageOutcome {
                steps,
                residual: rn,
            });
        }
        if steps >= opts.max_newton_steps {
            return Err(SolverError::NewtonDivergence {
                steps,
                residual: rn / load_norm,
            });
        }
        let tangent = fem.assemble_tangent(sigma_tri, params, u, opts.eps_reg);
        let chol = tangent.factor().map_err(|_| SolverError::SingularTangent)?;
        let delta = fem.reduced_to_full(&chol.solve(residual.as_slice()));

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &*u - &delta * alpha;
            let r_new = fem.assemble_residual(sigma_tri, params, &candidate) - load;
            let rn_new = r_new.norm();
            if rn_new < rn {
                accepted = Some((candidate, r_new, rn_new, alpha));
                break;
            }
            alpha *= 0.5;
        }
        let (candidate, r_new, rn_new, alpha) = accepted.ok_or(SolverError::NewtonDivergence {
            steps,
            residual: rn / load_norm,
        })?;
        *u = candidate;
        residual = r_new;
        rn = rn_new;
        steps += 1;
        let energy = fem.energy_value(sigma_tri, params, u, current);
        log::debug!(
            "newton stage p={} step={} residual={:.3e} damping={} energy={:.6e}",
            params.p(),
            steps,
            rn / load_norm,
            alpha,
            energy
        );
        trace.push(NewtonStep {
            stage_p: params.p(),
            step: steps,
            residual: rn / load_norm,
            damping: alpha,
            energy,
        });
    }
}

fn solve_with_initial(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
    opts: &SolverOptions,
    initial: Option<&NodalField>,
) -> Result<ForwardSolution, SolverError> {
    let start = match initial {
        Some(guess) => {
            if guess.values().len() != fem.mesh().node_count() {
                return Err(SolverError::MeshMismatch);
            }
            guess.clone()
        }
        None => NodalField::zeros(fem.mesh().node_count(), fem.gauge()),
    };
    let stages = match initial {
        Some(_) => vec![params.p()],
        None => continuation_stages(params.p(), opts.continuation_threshold),
    };
    solve_stages(fem, sigma, params, current, opts, start, stages)
}

fn solve_stages(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
    opts: &SolverOptions,
    start: NodalField,
    stages: Vec<f64>,
) -> Result<ForwardSolution, SolverError> {
    let sigma_tri = fem.sigma_per_tri(sigma, params.p())?;
    let load = fem.load_vector(current)?;
    let load_norm = load.norm();
    if load_norm == 0.0 {
        return Ok(ForwardSolution {
            field: NodalField::zeros(fem.mesh().node_count(), fem.gauge()),
            diagnostics: NewtonDiagnostics::default(),
        });
    }

    let mut u = start.values().clone();
    let mut trace = Vec::new();
    let mut total_steps = 0;
    let mut final_residual = 0.0;
    let n_stages = stages.len();
    for (k, stage_p) in stages.into_iter().enumerate() {
        let is_final = k + 1 == n_stages;
        let stage_params = EnergyParams::new(stage_p, params.tau()).expect("valid stage");
        // Intermediate stages only seed the next one; a loose tolerance is
        // enough there.
        let stage_tol = if is_final {
            opts.tol
        } else {
            (opts.tol * 1e4).clamp(opts.tol, 1e-6)
        };
        let outcome = newton_stage(
            fem,
            &sigma_tri,
            &stage_params,
            &load,
            load_norm,
            &mut u,
            opts,
            stage_tol,
            current,
            &mut trace,
        )?;
        total_steps += outcome.steps;
        final_residual = outcome.residual;
    }

    Ok(ForwardSolution {
        field: NodalField::new(u, fem.gauge()),
        diagnostics: NewtonDiagnostics {
            steps: total_steps,
            final_residual: final_residual / load_norm,
            load_norm,
            trace,
        },
    })
}

/// Solve the discrete nonlinear Neumann problem, gauge-fixed at the context's
/// gauge node.
pub fn solve_forward(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
    opts: &SolverOptions,
) -> Result<ForwardSolution, SolverError> {
    solve_with_initial(fem, sigma, params, current, opts, None)
}

/// Factorized p = 2 operator for one conductivity. The linear tangent does
/// not depend on the iterate or on tau, so one factorization serves every
/// current as the initial-guess solve.
pub struct P2Base {
    chol: crate::linalg::ProfileCholesky,
}

pub fn p2_base(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
) -> Result<P2Base, SolverError> {
    let sigma_tri = fem.sigma_per_tri(sigma, params.p())?;
    let p2 = EnergyParams::new(2.0, 0.0).expect("p = 2 is valid");
    let zero = DVector::zeros(fem.mesh().node_count());
    let tangent = fem.assemble_tangent(&sigma_tri, &p2, &zero, 0.0);
    let chol = tangent.factor().map_err(|_| SolverError::SingularTangent)?;
    Ok(P2Base { chol })
}

impl P2Base {
    /// Solution of the linear p = 2 problem for one current.
    pub fn solve(
        &self,
        fem: &FemContext,
        current: &BoundaryCurrent,
    ) -> Result<NodalField, SolverError> {
        let load = fem.load_vector(current)?;
        let full = fem.reduced_to_full(&self.chol.solve(load.as_slice()));
        Ok(NodalField::new(full, fem.gauge()))
    }
}

/// Continuation ladder starting from a precomputed p = 2 solution; this is
/// the inner loop of measurement simulation, where one [`P2Base`]
/// factorization seeds all currents.
pub fn solve_forward_from_p2(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
    opts: &SolverOptions,
    base: &P2Base,
) -> Result<ForwardSolution, SolverError> {
    let guess = base.solve(fem, current)?;
    if params.p() == 2.0 {
        // the guess already solves the target system
        let sigma_tri = fem.sigma_per_tri(sigma, params.p())?;
        let load = fem.load_vector(current)?;
        let load_norm = load.norm();
        let residual =
            (fem.assemble_residual(&sigma_tri, params, guess.values()) - &load).norm();
        return Ok(ForwardSolution {
            field: guess,
            diagnostics: NewtonDiagnostics {
                steps: 0,
                final_residual: if load_norm > 0.0 { residual / load_norm } else { 0.0 },
                load_norm,
                trace: Vec::new(),
            },
        });
    }
    let mut stages = continuation_stages(params.p(), opts.continuation_threshold);
    stages.remove(0); // the p = 2 stage is the supplied guess
    solve_stages(fem, sigma, params, current, opts, guess, stages)
}

/// Newton directly at the target exponent from a caller-provided iterate
/// (e.g. the solution at a neighboring p). Skips the continuation ladder.
pub fn solve_forward_warm(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
    opts: &SolverOptions,
    guess: &NodalField,
) -> Result<ForwardSolution, SolverError> {
    solve_with_initial(fem, sigma, params, current, opts, Some(guess))
}

/// The (weighted, smoothed) p-energy of a trial field against a current.
pub fn energy(
    fem: &FemContext,
    v: &NodalField,
    sigma: &ConductivityField,
    params: &EnergyParams,
    current: &BoundaryCurrent,
) -> Result<f64, SolverError> {
    if v.values().len() != fem.mesh().node_count()
        || current.samples.len() != fem.mesh().boundary_count()
    {
        return Err(SolverError::MeshMismatch);
    }
    let sigma_tri = fem.sigma_per_tri(sigma, params.p())?;
    Ok(fem.energy_value(&sigma_tri, params, v.values(), current))
}
