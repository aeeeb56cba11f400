//! Experiment orchestration: linearization-error sweeps and one-step
//! reconstruction-error sweeps over (sample, parametrization, p, tau), with
//! plot-ready CSV tables, per-curve trend flags and a JSON run manifest.
//!
//! Data for the inverse runs is simulated on a perturbed mesh while the
//! operators live on the reference mesh. Sample members are independent
//! work items (parallel map, ordered reduction); member k's noise vector is
//! derived from (seed, k) only, so it is identical across p values.

use crate::conductivity::{ConductivityField, Parametrization};
use crate::energy::EnergyParams;
use crate::error::ExperimentError;
use crate::fem::{FemContext, NodalField};
use crate::measurement::{add_noise, simulate_with_state, MeasurementVector};
use crate::mesh::{build_disk_mesh, perturb_mesh};
use crate::partition::{build_partition, build_partition_auto};
use crate::prior::{covariance_for_sample, lognormal_moments, sample_logconductivity, CovarianceModel, SampleId};
use crate::reconstruct::{to_log_conductivity, OneStepOperator};
use crate::seed::{derive_seed, Stream};
use crate::sensitivity::{assemble_jacobians, JacobianMatrix};
use crate::solver::SolverOptions;
use nalgebra::DVector;
use rayon::prelude::*;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

/// Positivity floor used before log-conversion of reconstructions.
pub const LOG_FLOOR: f64 = 1e-6;

/// Reference and data meshes plus solver settings for one experiment run.
pub struct ExperimentContext {
    pub fem: Arc<FemContext>,
    pub data_fem: Arc<FemContext>,
    pub j_max: usize,
    pub opts: SolverOptions,
}

pub fn build_context(
    mesh_n: usize,
    cells: usize,
    j_max: usize,
    seed: u64,
    opts: SolverOptions,
) -> Result<ExperimentContext, ExperimentError> {
    let mesh = Arc::new(build_disk_mesh(mesh_n)?);
    let partition = Arc::new(build_partition_auto(&mesh, cells)?);
    let data_mesh = Arc::new(perturb_mesh(&mesh, derive_seed(seed, Stream::MeshPerturb, 0))?);
    // same polar cell layout on the perturbed mesh
    let data_partition = Arc::new(build_partition(
        &data_mesh,
        partition.m_rings(),
        partition.target_cells(),
    )?);
    if data_partition.n_cells() != partition.n_cells() {
        return Err(ExperimentError::Config(
            "perturbed-mesh partition does not reproduce the cell layout".into(),
        ));
    }
    let fem = Arc::new(FemContext::new(mesh, partition)?);
    let data_fem = Arc::new(FemContext::new(data_mesh, data_partition)?);
    Ok(ExperimentContext {
        fem,
        data_fem,
        j_max,
        opts,
    })
}

/// Per-member nodal solutions carried between neighboring grid points.
pub type WarmState = Vec<Option<Vec<NodalField>>>;

/// Fresh (cold) warm-start state for `members` sample members.
pub fn warm_state(members: usize) -> WarmState {
    vec![None; members]
}

/// Forward-measure every sample member at one (p, tau); `warm` carries the
/// per-member nodal solutions from a neighboring grid point.
pub fn measure_members(
    fem: &FemContext,
    kappas: &[DVector<f64>],
    params: &EnergyParams,
    j_max: usize,
    opts: &SolverOptions,
    warm: WarmState,
) -> (Vec<Option<MeasurementVector>>, WarmState, usize) {
    let partition = fem.partition().clone();
    let results: Vec<(Option<MeasurementVector>, Option<Vec<NodalField>>)> = kappas
        .par_iter()
        .zip(warm.into_par_iter())
        .map(|(kappa, w)| {
            let field =
                match ConductivityField::from_kappa(partition.clone(), kappa, Parametrization::Std, params.p()) {
                    Ok(f) => f,
                    Err(e) => {
                        log::warn!("member skipped: {e}");
                        return (None, None);
                    }
                };
            match simulate_with_state(fem, &field, params, j_max, opts, w.as_deref()) {
                Ok((mv, fields)) => (Some(mv), Some(fields)),
                Err(e) => {
                    log::warn!("member skipped: {e}");
                    (None, None)
                }
            }
        })
        .collect();
    let mut measurements = Vec::with_capacity(results.len());
    let mut warm_out = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for (mv, w) in results {
        if mv.is_none() {
            skipped += 1;
        }
        measurements.push(mv);
        warm_out.push(w);
    }
    (measurements, warm_out, skipped)
}

/// More than 1% skipped members fails the run instead of biasing the mean.
pub fn check_skips(skipped: usize, total: usize) -> Result<(), ExperimentError> {
    if skipped as f64 > 0.01 * total as f64 {
        Err(ExperimentError::TooManyFailures {
            failed: skipped,
            total,
        })
    } else {
        Ok(())
    }
}

/// Mean relative linearization error over the present members.
pub fn linearization_error_from(
    kappas: &[DVector<f64>],
    measurements: &[Option<MeasurementVector>],
    parametrization: Parametrization,
    p: f64,
    jac: &JacobianMatrix,
    u0: &MeasurementVector,
) -> f64 {
    let m = jac.cols();
    let x0 = DVector::from_element(m, parametrization.base_value());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (kappa, mv) in kappas.iter().zip(measurements) {
        let Some(mv) = mv else { continue };
        let x = kappa.map(|k| parametrization.value_from_kappa(k, p));
        let predicted = u0.values() + &jac.matrix * (x - &x0);
        let e = (mv.values() - predicted).norm() / mv.values().norm();
        sum += e;
        count += 1;
    }
    sum / count as f64
}

#[derive(Clone, Copy, Debug)]
pub struct LinearizationPoint {
    pub e: f64,
    pub members: usize,
    pub skipped: usize,
}

/// Mean relative linearization error of one parametrization at one (p, tau).
pub fn linearization_error(
    fem: &FemContext,
    kappas: &[DVector<f64>],
    parametrization: Parametrization,
    params: &EnergyParams,
    jac: &JacobianMatrix,
    u0: &MeasurementVector,
    opts: &SolverOptions,
) -> Result<LinearizationPoint, ExperimentError> {
    let warm = vec![None; kappas.len()];
    let (measurements, _, skipped) =
        measure_members(fem, kappas, params, u0.j_max(), opts, warm);
    check_skips(skipped, kappas.len())?;
    let e = linearization_error_from(kappas, &measurements, parametrization, params.p(), jac, u0);
    Ok(LinearizationPoint {
        e,
        members: kappas.len(),
        skipped,
    })
}

/// Noisy data vectors for every member: forward solves on the data mesh plus
/// member-indexed Gaussian noise (identical across p by construction).
pub fn simulate_noisy_data(
    ctx: &ExperimentContext,
    kappas: &[DVector<f64>],
    params: &EnergyParams,
    lambda: f64,
    noise_seed: u64,
    warm: WarmState,
) -> (Vec<Option<MeasurementVector>>, WarmState, usize) {
    let (clean, warm, skipped) =
        measure_members(&ctx.data_fem, kappas, params, ctx.j_max, &ctx.opts, warm);
    let noisy = clean
        .into_iter()
        .enumerate()
        .map(|(k, mv)| mv.map(|mv| add_noise(&mv, lambda, derive_seed(noise_seed, Stream::Noise, k as u64))))
        .collect();
    (noisy, warm, skipped)
}

/// Prior mean and covariance for a parametrization: the Gaussian itself for
/// the log parametrization, the induced log-normal moments otherwise.
pub fn prior_moments(
    model: &CovarianceModel,
    parametrization: Parametrization,
    p: f64,
) -> (DVector<f64>, nalgebra::DMatrix<f64>) {
    match parametrization.lognormal_exponent(p) {
        None => (DVector::zeros(model.dim()), model.matrix().clone()),
        Some(r) => lognormal_moments(model, r),
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionPoint {
    pub iota: f64,
    pub members: usize,
    pub skipped: usize,
    pub clipped_cells: usize,
    /// (member index, reconstructed log-conductivity) for the first few
    /// members, for snapshot export.
    pub snapshots: Vec<(usize, DVector<f64>)>,
}

/// Reconstruct every member from precomputed data vectors and average the
/// log-conductivity error.
pub fn reconstruct_from_data(
    ctx: &ExperimentContext,
    data: &[Option<MeasurementVector>],
    kappas: &[DVector<f64>],
    parametrization: Parametrization,
    op_params: &EnergyParams,
    prior_model: &CovarianceModel,
    lambda: f64,
    keep_snapshots: usize,
) -> Result<ReconstructionPoint, ExperimentError> {
    let base = ConductivityField::homogeneous(ctx.fem.partition().clone(), Parametrization::Std);
    let (jacs, u0) = assemble_jacobians(
        &ctx.fem,
        &base,
        op_params,
        ctx.j_max,
        &[parametrization],
        &ctx.opts,
    )?;
    let (mean, cov) = prior_moments(prior_model, parametrization, op_params.p());
    let op = OneStepOperator::new(&jacs[0], &u0, &mean, &cov, lambda)?;

    let m = ctx.fem.partition().n_cells();
    let scale = (std::f64::consts::PI / m as f64).sqrt();
    let results: Vec<Option<(f64, usize, Option<DVector<f64>>)>> = data
        .par_iter()
        .enumerate()
        .map(|(k, mv)| {
            let mv = mv.as_ref()?;
            let x = match op.reconstruct(mv) {
                Ok(x) => x,
                Err(e) => {
                    log::warn!("member {k} reconstruction skipped: {e}");
                    return None;
                }
            };
            let lc = to_log_conductivity(&x, parametrization, op_params.p(), LOG_FLOOR);
            let err = (&lc.kappa - &kappas[k]).norm();
            let snap = (k < keep_snapshots).then(|| lc.kappa.clone());
            Some((err, lc.clipped, snap))
        })
        .collect();

    let mut sum = 0.0;
    let mut count = 0usize;
    let mut clipped_cells = 0usize;
    let mut snapshots = Vec::new();
    let mut skipped = 0usize;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Some((err, clipped, snap)) => {
                sum += err;
                count += 1;
                clipped_cells += clipped;
                if let Some(kappa) = snap {
                    snapshots.push((k, kappa));
                }
            }
            None => skipped += 1,
        }
    }
    check_skips(skipped, data.len())?;
    Ok(ReconstructionPoint {
        iota: scale * sum / count as f64,
        members: data.len(),
        skipped,
        clipped_cells,
        snapshots,
    })
}

/// Mean reconstruction error at one (sample, parametrization, p, tau).
/// `operator_p` overrides the exponent used for the linearization operators
/// (the misspecified-model variant); data is always simulated at params.
pub fn reconstruction_error(
    ctx: &ExperimentContext,
    prior_model: &CovarianceModel,
    kappas: &[DVector<f64>],
    parametrization: Parametrization,
    params: &EnergyParams,
    operator_p: Option<f64>,
    lambda: f64,
    noise_seed: u64,
    keep_snapshots: usize,
) -> Result<ReconstructionPoint, ExperimentError> {
    let warm = vec![None; kappas.len()];
    let (data, _, skipped) = simulate_noisy_data(ctx, kappas, params, lambda, noise_seed, warm);
    check_skips(skipped, kappas.len())?;
    let op_params = EnergyParams::new(operator_p.unwrap_or(params.p()), params.tau())
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    reconstruct_from_data(
        ctx,
        &data,
        kappas,
        parametrization,
        &op_params,
        prior_model,
        lambda,
        keep_snapshots,
    )
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SweepTables {
    pub linerr: bool,
    pub reconerr: bool,
    pub misspecified: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepConfig {
    pub mesh_n: usize,
    pub cells: usize,
    pub j_max: usize,
    pub members: usize,
    pub p_grid: Vec<f64>,
    /// tau values for the linearization table.
    pub taus: Vec<f64>,
    /// tau values for the reconstruction table.
    pub recon_taus: Vec<f64>,
    pub samples: Vec<SampleId>,
    pub parametrizations: Vec<Parametrization>,
    pub lambda: f64,
    pub seed: u64,
    pub snapshot_members: usize,
    pub tables: SweepTables,
    pub solver: SolverOptions,
    pub out_dir: PathBuf,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl SweepConfig {
    /// Desk-scale defaults: minutes-scale runs that preserve the trends.
    pub fn desk_defaults(out_dir: PathBuf) -> Self {
        SweepConfig {
            mesh_n: 128,
            cells: 240,
            j_max: 8,
            members: 100,
            p_grid: linspace(1.5, 3.0, 16),
            taus: vec![0.0, 0.1],
            recon_taus: vec![0.0],
            samples: vec![SampleId::A, SampleId::B, SampleId::C, SampleId::D],
            parametrizations: Parametrization::ALL.to_vec(),
            lambda: 1e-2,
            seed: 7,
            snapshot_members: 3,
            tables: SweepTables {
                linerr: true,
                reconerr: true,
                misspecified: true,
            },
            // generous step budget: cold solves at small p near tau = 0 can
            // need well over the 50-step default
            solver: SolverOptions {
                max_newton_steps: 200,
                ..SolverOptions::default()
            },
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.p_grid.is_empty() {
            return bad("empty p grid".into());
        }
        if let Some(p) = self.p_grid.iter().find(|&&p| p <= 1.0) {
            return bad(format!("p grid value {p} outside (1, inf)"));
        }
        if self.taus.iter().chain(&self.recon_taus).any(|&t| t < 0.0) {
            return bad("negative tau".into());
        }
        if self.members == 0 {
            return bad("need at least one member".into());
        }
        if self.samples.is_empty() || self.parametrizations.is_empty() {
            return bad("need at least one sample and one parametrization".into());
        }
        if self.lambda <= 0.0 && self.tables.reconerr {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        Ok(())
    }

    /// Rough forward-solve count, used to flag long-running configurations.
    pub fn estimated_solves(&self) -> usize {
        let per_point = self.members * 2 * self.j_max;
        let linerr = if self.tables.linerr {
            self.samples.len() * self.taus.len() * self.p_grid.len() * per_point
        } else {
            0
        };
        let recon = if self.tables.reconerr {
            self.samples.len() * self.recon_taus.len() * self.p_grid.len() * per_point
        } else {
            0
        };
        linerr + recon
    }
}

#[derive(Clone, Debug)]
struct LinerrRow {
    sample: SampleId,
    param: Parametrization,
    p: f64,
    tau: f64,
    members: usize,
    skipped: usize,
    e: f64,
}

#[derive(Clone, Debug)]
struct ReconRow {
    sample: SampleId,
    param: Parametrization,
    p: f64,
    tau: f64,
    lambda: f64,
    operator_p: f64,
    members: usize,
    skipped: usize,
    clipped: usize,
    iota: f64,
}

#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub linerr_rows: usize,
    pub reconerr_rows: usize,
    pub failures: Vec<String>,
    pub out_dir: PathBuf,
}

/// Run the configured sweeps and write `linerr.csv`, `reconerr.csv`,
/// `trends.csv`, snapshot files and `manifest.json` under the output
/// directory. Blocks that fail (e.g. too many skipped members) are recorded
/// in the manifest and the remaining blocks still run.
pub fn sweep(config: &SweepConfig) -> Result<SweepSummary, ExperimentError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    if config.estimated_solves() > 2_000_000 || config.mesh_n >= 512 {
        log::warn!(
            "large configuration: about {} forward solves on an N={} mesh; expect a long run",
            config.estimated_solves(),
            config.mesh_n
        );
    }

    let ctx = build_context(
        config.mesh_n,
        config.cells,
        config.j_max,
        config.seed,
        config.solver,
    )?;
    let base = ConductivityField::homogeneous(ctx.fem.partition().clone(), Parametrization::Std);

    let mut failures: Vec<String> = Vec::new();
    let mut linerr_rows: Vec<LinerrRow> = Vec::new();
    let mut recon_rows: Vec<ReconRow> = Vec::new();

    // per-sample member draws (on the reference partition)
    let mut sample_kappas: Vec<(SampleId, CovarianceModel, Vec<DVector<f64>>)> = Vec::new();
    for (si, &sample) in config.samples.iter().enumerate() {
        let model = covariance_for_sample(ctx.fem.partition(), sample)?;
        let kappas = sample_logconductivity(
            &model,
            config.members,
            derive_seed(config.seed, Stream::SampleDraw, si as u64),
        )?;
        sample_kappas.push((sample, model, kappas));
    }

    // Walk the grid from large p downward: the only cold start is then the
    // benign p_max point, and every p < 2 point is warm-started from its
    // neighbor instead of crawling through the degenerate region.
    let mut grid_desc = config.p_grid.clone();
    grid_desc.sort_by(|a, b| b.partial_cmp(a).unwrap());

    if config.tables.linerr {
        for (sample, _, kappas) in &sample_kappas {
            for &tau in &config.taus {
                let mut warm: WarmState = vec![None; kappas.len()];
                for &p in &grid_desc {
                    let params = EnergyParams::new(p, tau)
                        .map_err(|e| ExperimentError::Config(e.to_string()))?;
                    let (jacs, u0) = match assemble_jacobians(
                        &ctx.fem,
                        &base,
                        &params,
                        config.j_max,
                        &config.parametrizations,
                        &ctx.opts,
                    ) {
                        Ok(x) => x,
                        Err(e) => {
                            failures.push(format!(
                                "linerr {} tau={tau} p={p}: {e}",
                                sample.label()
                            ));
                            continue;
                        }
                    };
                    let (measurements, warm_next, skipped) =
                        measure_members(&ctx.fem, kappas, &params, config.j_max, &ctx.opts, warm);
                    warm = warm_next;
                    if let Err(e) = check_skips(skipped, kappas.len()) {
                        failures.push(format!("linerr {} tau={tau} p={p}: {e}", sample.label()));
                        continue;
                    }
                    for jac in &jacs {
                        let e = linearization_error_from(
                            kappas,
                            &measurements,
                            jac.parametrization,
                            p,
                            jac,
                            &u0,
                        );
                        linerr_rows.push(LinerrRow {
                            sample: *sample,
                            param: jac.parametrization,
                            p,
                            tau,
                            members: kappas.len(),
                            skipped,
                            e,
                        });
                    }
                }
            }
        }
        write_linerr_csv(&config.out_dir.join("linerr.csv"), &linerr_rows)?;
    }

    if config.tables.reconerr {
        let snapshot_ps = snapshot_grid_points(&config.p_grid);
        for (sample, model, kappas) in &sample_kappas {
            for &tau in &config.recon_taus {
                let mut warm: WarmState = vec![None; kappas.len()];
                for &p in &grid_desc {
                    let params = EnergyParams::new(p, tau)
                        .map_err(|e| ExperimentError::Config(e.to_string()))?;
                    let (data, warm_next, skipped) = simulate_noisy_data(
                        &ctx,
                        kappas,
                        &params,
                        config.lambda,
                        config.seed,
                        warm,
                    );
                    warm = warm_next;
                    if let Err(e) = check_skips(skipped, kappas.len()) {
                        failures.push(format!("reconerr {} tau={tau} p={p}: {e}", sample.label()));
                        continue;
                    }
                    let keep = if snapshot_ps.contains(&p.to_bits()) {
                        config.snapshot_members
                    } else {
                        0
                    };
                    let mut operator_plan: Vec<(Parametrization, f64)> = config
                        .parametrizations
                        .iter()
                        .map(|&pz| (pz, p))
                        .collect();
                    if config.tables.misspecified
                        && config.parametrizations.contains(&Parametrization::Exp)
                    {
                        operator_plan.push((Parametrization::Exp, 2.0));
                    }
                    for (pz, op_p) in operator_plan {
                        let op_params = EnergyParams::new(op_p, tau)
                            .map_err(|e| ExperimentError::Config(e.to_string()))?;
                        let keep_here = if op_p == p && pz == snapshot_param(&config.parametrizations)
                        {
                            keep
                        } else {
                            0
                        };
                        match reconstruct_from_data(
                            &ctx,
                            &data,
                            kappas,
                            pz,
                            &op_params,
                            model,
                            config.lambda,
                            keep_here,
                        ) {
                            Ok(point) => {
                                write_snapshots(config, &ctx, *sample, pz, p, kappas, &point)?;
                                recon_rows.push(ReconRow {
                                    sample: *sample,
                                    param: pz,
                                    p,
                                    tau,
                                    lambda: config.lambda,
                                    operator_p: op_p,
                                    members: point.members,
                                    skipped: point.skipped + skipped,
                                    clipped: point.clipped_cells,
                                    iota: point.iota,
                                });
                            }
                            Err(e) => failures.push(format!(
                                "reconerr {} {} tau={tau} p={p} op_p={op_p}: {e}",
                                sample.label(),
                                pz.label()
                            )),
                        }
                    }
                }
            }
        }
        write_reconerr_csv(&config.out_dir.join("reconerr.csv"), &recon_rows)?;
    }

    write_trends_csv(&config.out_dir.join("trends.csv"), &linerr_rows, &recon_rows)?;
    write_manifest(config, &ctx, &failures, linerr_rows.len(), recon_rows.len())?;

    Ok(SweepSummary {
        linerr_rows: linerr_rows.len(),
        reconerr_rows: recon_rows.len(),
        failures,
        out_dir: config.out_dir.clone(),
    })
}

/// First, last and the point nearest to p = 2 get snapshot exports.
fn snapshot_grid_points(grid: &[f64]) -> Vec<u64> {
    let mut out = Vec::new();
    if let (Some(&first), Some(&last)) = (grid.first(), grid.last()) {
        out.push(first.to_bits());
        out.push(last.to_bits());
        if let Some(&mid) = grid
            .iter()
            .min_by(|a, b| (*a - 2.0).abs().partial_cmp(&(*b - 2.0).abs()).unwrap())
        {
            out.push(mid.to_bits());
        }
    }
    out
}

fn snapshot_param(params: &[Parametrization]) -> Parametrization {
    if params.contains(&Parametrization::Exp) {
        Parametrization::Exp
    } else {
        params[0]
    }
}

fn write_snapshots(
    config: &SweepConfig,
    ctx: &ExperimentContext,
    sample: SampleId,
    param: Parametrization,
    p: f64,
    kappas: &[DVector<f64>],
    point: &ReconstructionPoint,
) -> Result<(), ExperimentError> {
    if point.snapshots.is_empty() {
        return Ok(());
    }
    let dir = config.out_dir.join("snapshots");
    std::fs::create_dir_all(&dir)?;
    let centroids = ctx.fem.partition().centroids();
    for (member, kappa_reco) in &point.snapshots {
        let path = dir.join(format!(
            "recon_{}_{}_p{:.4}_m{member}.csv",
            sample.label(),
            param.label(),
            p
        ));
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# schema=recon-snapshot-v1")?;
        writeln!(w, "cell,x,y,kappa_target,kappa_reco")?;
        let target = &kappas[*member];
        for i in 0..kappa_reco.len() {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.12e},{:.12e}",
                i, centroids[i].x, centroids[i].y, target[i], kappa_reco[i]
            )?;
        }
    }
    Ok(())
}

fn write_linerr_csv(path: &PathBuf, rows: &[LinerrRow]) -> Result<(), ExperimentError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# schema=linerr-v1")?;
    writeln!(w, "sample,param,p,tau,members,skipped,e")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.3},{},{},{:.12e}",
            r.sample.label(),
            r.param.label(),
            r.p,
            r.tau,
            r.members,
            r.skipped,
            r.e
        )?;
    }
    Ok(())
}

fn write_reconerr_csv(path: &PathBuf, rows: &[ReconRow]) -> Result<(), ExperimentError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# schema=reconerr-v1")?;
    writeln!(w, "sample,param,p,tau,lambda,operator_p,members,skipped,clipped_cells,iota")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.3},{:.3e},{:.6},{},{},{},{:.12e}",
            r.sample.label(),
            r.param.label(),
            r.p,
            r.tau,
            r.lambda,
            r.operator_p,
            r.members,
            r.skipped,
            r.clipped,
            r.iota
        )?;
    }
    Ok(())
}

/// Monotone-trend flags per curve: count of non-increasing violations along
/// the p grid, the curve's range, and the worst gap between tau variants.
fn write_trends_csv(
    path: &PathBuf,
    linerr: &[LinerrRow],
    recon: &[ReconRow],
) -> Result<(), ExperimentError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# schema=trends-v1")?;
    writeln!(w, "table,sample,param,tau,points,nonincreasing_violations,range,tau_gap")?;

    let mut linerr_curves: Vec<((SampleId, Parametrization, u64), Vec<(f64, f64)>)> = Vec::new();
    for r in linerr {
        let key = (r.sample, r.param, r.tau.to_bits());
        match linerr_curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((r.p, r.e)),
            None => linerr_curves.push((key, vec![(r.p, r.e)])),
        }
    }
    for ((sample, param, tau_bits), pts) in &linerr_curves {
        let tau = f64::from_bits(*tau_bits);
        let (violations, range) = curve_stats(pts);
        // worst gap to any other tau variant of the same curve
        let mut tau_gap = f64::NAN;
        for ((s2, p2, t2), pts2) in &linerr_curves {
            if s2 == sample && p2 == param && *t2 != *tau_bits {
                let gap = pts
                    .iter()
                    .zip(pts2)
                    .map(|((_, a), (_, b))| (a - b).abs())
                    .fold(0.0f64, f64::max);
                tau_gap = if tau_gap.is_nan() { gap } else { tau_gap.max(gap) };
            }
        }
        writeln!(
            w,
            "linerr,{},{},{:.3},{},{},{:.6e},{}",
            sample.label(),
            param.label(),
            tau,
            pts.len(),
            violations,
            range,
            if tau_gap.is_nan() {
                String::new()
            } else {
                format!("{tau_gap:.6e}")
            }
        )?;
    }

    let mut recon_curves: Vec<((SampleId, Parametrization, u64, bool), Vec<(f64, f64)>)> =
        Vec::new();
    for r in recon {
        let mis = r.operator_p != r.p;
        let key = (r.sample, r.param, r.tau.to_bits(), mis);
        match recon_curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((r.p, r.iota)),
            None => recon_curves.push((key, vec![(r.p, r.iota)])),
        }
    }
    for ((sample, param, tau_bits, mis), pts) in &recon_curves {
        let (violations, range) = curve_stats(pts);
        writeln!(
            w,
            "reconerr{},{},{},{:.3},{},{},{:.6e},",
            if *mis { "-p2" } else { "" },
            sample.label(),
            param.label(),
            f64::from_bits(*tau_bits),
            pts.len(),
            violations,
            range
        )?;
    }
    Ok(())
}

fn curve_stats(points: &[(f64, f64)]) -> (usize, f64) {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let violations = sorted
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 * (1.0 + 1e-12))
        .count();
    let lo = sorted.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = sorted.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (violations, hi - lo)
}

fn write_manifest(
    config: &SweepConfig,
    ctx: &ExperimentContext,
    failures: &[String],
    linerr_rows: usize,
    reconerr_rows: usize,
) -> Result<(), ExperimentError> {
    let manifest = serde_json::json!({
        "schema": "sweep-manifest-v1",
        "config": config,
        "mesh_hash": format!("{:016x}", ctx.fem.mesh().hash()),
        "data_mesh_hash": format!("{:016x}", ctx.data_fem.mesh().hash()),
        "cells": ctx.fem.partition().n_cells(),
        "estimated_solves": config.estimated_solves(),
        "linerr_rows": linerr_rows,
        "reconerr_rows": reconerr_rows,
        "failures": failures,
    });
    let mut w = std::io::BufWriter::new(std::fs::File::create(config.out_dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)
        .map_err(|e| ExperimentError::Config(format!("manifest serialization: {e}")))?;
    writeln!(w)?;
    Ok(())
}
