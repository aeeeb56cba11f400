//! Command-line front end: mesh building, forward solves, Jacobian assembly,
//! the kernel property suite, prior sampling, and the linearization /
//! inversion experiment sweeps.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 property or
//! acceptance failure, 1 anything else.

mod config;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use plap_core::conductivity::{ConductivityField, Parametrization};
use plap_core::energy::EnergyParams;
use plap_core::error::{ExperimentError, MeasurementError, SolverError};
use plap_core::experiments::{
    build_context, linearization_error, reconstruction_error, sweep, SweepConfig,
};
use plap_core::fem::FemContext;
use plap_core::measurement::{project_trace, trig_currents};
use plap_core::mesh::{build_disk_mesh, perturb_mesh, write_mesh};
use plap_core::partition::build_partition_auto;
use plap_core::prior::{covariance_for_sample, sample_logconductivity, SampleId};
use plap_core::seed::{derive_seed, Stream};
use plap_core::sensitivity::assemble_jacobian;
use plap_core::solver::{solve_forward, SolverOptions};
use plap_core::verify_inequalities;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "plap", version, about = "Weighted p-Laplace forward solves, sensitivities and one-step inversion on the unit disk")]
struct Cli {
    /// Cap the worker thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the disk mesh and cell partition and export them as plain text.
    MeshBuild(MeshBuildArgs),
    /// Solve one forward problem and report the projected trace.
    Solve(SolveArgs),
    /// Assemble the measurement Jacobian at the homogeneous base point.
    Jacobian(JacobianArgs),
    /// Run the randomized kernel-inequality suite.
    Proptest(ProptestArgs),
    /// Draw log-conductivity samples from a named prior configuration.
    Sample(SampleArgs),
    /// Mean relative linearization error at one grid point.
    Linerr(LinerrArgs),
    /// Mean one-step reconstruction error at one grid point.
    Invert(InvertArgs),
    /// Full experiment sweep driven by a key=value config file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonMesh {
    /// Boundary node count of the disk mesh.
    #[arg(long, default_value_t = 128)]
    mesh_n: usize,
    /// Target cell count of the conductivity partition.
    #[arg(long, default_value_t = 240)]
    cells: usize,
}

#[derive(Args)]
struct MeshBuildArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    /// Regenerate with jittered interior seeding (inverse-crime guard).
    #[arg(long)]
    perturb: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Driving current, e.g. cos1 or sin3.
    #[arg(long, default_value = "cos1")]
    current: String,
    /// Optional CSV file with one conductivity value per cell.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Parametrization of the values in --sigma.
    #[arg(long, default_value = "std")]
    param: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 8)]
    j_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JacobianArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value = "std")]
    param: String,
    #[arg(long, default_value_t = 8)]
    j_max: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProptestArgs {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 2026)]
    seed: u64,
    #[arg(long, default_value_t = 1.2)]
    p_min: f64,
    #[arg(long, default_value_t = 4.0)]
    p_max: f64,
    #[arg(long, default_value_t = 0.0)]
    tau_min: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_max: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    /// Prior configuration A..F.
    #[arg(long, default_value = "A")]
    sample: String,
    #[arg(long, default_value_t = 1000)]
    members: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LinerrArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    #[arg(long, default_value = "A")]
    sample: String,
    #[arg(long, default_value = "std")]
    param: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 100)]
    members: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    j_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    mesh: CommonMesh,
    #[arg(long, default_value = "E")]
    sample: String,
    #[arg(long, default_value = "exp")]
    param: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Reconstruct with p = 2 operators regardless of the data p.
    #[arg(long)]
    misspecify_p2: bool,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    members: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    j_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Key = value configuration file; see `config` module docs for keys.
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory from the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: msg.into(),
        }
    }
    fn solver(msg: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: msg.into(),
        }
    }
    fn property(msg: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: msg.into(),
        }
    }
    fn other(msg: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: msg.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::other(format!("io error: {e}"))
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::MeshMismatch | SolverError::InvalidCurrent(_) | SolverError::InvalidConductivity(_) => {
                Failure::config(e.to_string())
            }
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<MeasurementError> for Failure {
    fn from(e: MeasurementError) -> Self {
        match e {
            MeasurementError::Aliasing { .. } => Failure::config(e.to_string()),
            MeasurementError::Solver(s) => s.into(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Mesh(_) | ExperimentError::Prior(_) => {
                Failure::config(e.to_string())
            }
            ExperimentError::TooManyFailures { .. }
            | ExperimentError::Solver(_)
            | ExperimentError::Measurement(_)
            | ExperimentError::Reconstruct(_) => Failure::solver(e.to_string()),
            ExperimentError::Io(e) => e.into(),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: could not configure thread pool: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::MeshBuild(a) => cmd_mesh_build(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Jacobian(a) => cmd_jacobian(a),
        Command::Proptest(a) => cmd_proptest(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Linerr(a) => cmd_linerr(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}

fn parse_param(s: &str) -> Result<Parametrization, Failure> {
    Parametrization::parse(s)
        .ok_or_else(|| Failure::config(format!("unknown parametrization '{s}' (std|inv|nat|exp)")))
}

fn parse_sample(s: &str) -> Result<SampleId, Failure> {
    SampleId::parse(s).ok_or_else(|| Failure::config(format!("unknown sample '{s}' (A..F)")))
}

fn parse_current(s: &str) -> Result<(plap_core::fem::CurrentKind, usize), Failure> {
    let (kind, freq) = if let Some(f) = s.strip_prefix("cos") {
        (plap_core::fem::CurrentKind::Cos, f)
    } else if let Some(f) = s.strip_prefix("sin") {
        (plap_core::fem::CurrentKind::Sin, f)
    } else {
        return Err(Failure::config(format!(
            "bad current '{s}', expected e.g. cos1 or sin3"
        )));
    };
    let freq: usize = freq
        .parse()
        .map_err(|_| Failure::config(format!("bad current frequency in '{s}'")))?;
    if freq == 0 {
        return Err(Failure::config("current frequency must be >= 1"));
    }
    Ok((kind, freq))
}

fn params(p: f64, tau: f64) -> Result<EnergyParams, Failure> {
    EnergyParams::new(p, tau).map_err(|e| Failure::config(e.to_string()))
}

fn fem_context(mesh_n: usize, cells: usize) -> Result<FemContext, Failure> {
    let mesh = Arc::new(build_disk_mesh(mesh_n).map_err(|e| Failure::config(e.to_string()))?);
    let partition =
        Arc::new(build_partition_auto(&mesh, cells).map_err(|e| Failure::config(e.to_string()))?);
    Ok(FemContext::new(mesh, partition)?)
}

fn write_manifest(path: &PathBuf, manifest: serde_json::Value) -> Result<(), Failure> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Failure::other(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn cmd_mesh_build(a: MeshBuildArgs) -> Result<(), Failure> {
    std::fs::create_dir_all(&a.out)?;
    let base = build_disk_mesh(a.mesh.mesh_n).map_err(|e| Failure::config(e.to_string()))?;
    let mesh = if a.perturb {
        perturb_mesh(&base, a.seed).map_err(|e| Failure::solver(e.to_string()))?
    } else {
        base
    };
    let partition =
        build_partition_auto(&mesh, a.mesh.cells).map_err(|e| Failure::config(e.to_string()))?;
    let path = a.out.join("mesh.txt");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write_mesh(&mesh, Some(partition.cell_of_tri()), &mut w)?;
    write_manifest(
        &a.out.join("manifest.json"),
        serde_json::json!({
            "command": "mesh-build",
            "mesh_n": a.mesh.mesh_n,
            "cells": partition.n_cells(),
            "target_cells": a.mesh.cells,
            "perturb": a.perturb,
            "seed": a.seed,
            "nodes": mesh.node_count(),
            "triangles": mesh.tri_count(),
            "mesh_hash": format!("{:016x}", mesh.hash()),
        }),
    )?;
    println!(
        "mesh: {} nodes, {} triangles, {} cells -> {}",
        mesh.node_count(),
        mesh.tri_count(),
        partition.n_cells(),
        path.display()
    );
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let fem = fem_context(a.mesh.mesh_n, a.mesh.cells)?;
    let parametrization = parse_param(&a.param)?;
    let (kind, freq) = parse_current(&a.current)?;
    let prm = params(a.p, a.tau)?;
    let sigma = match &a.sigma {
        None => ConductivityField::homogeneous(fem.partition().clone(), parametrization),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let values: Result<Vec<f64>, _> = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse())
                .collect();
            let values =
                values.map_err(|e| Failure::config(format!("bad sigma file: {e}")))?;
            ConductivityField::new(fem.partition().clone(), DVector::from_vec(values), parametrization)?
        }
    };
    let currents = trig_currents(a.j_max.max(freq), fem.mesh())?;
    let current = currents
        .into_iter()
        .find(|c| c.kind == kind && c.frequency == freq)
        .expect("requested current is in range");
    let opts = SolverOptions::with_tol(a.tol);
    let sol = solve_forward(&fem, &sigma, &prm, &current, &opts)?;
    let trace = fem.boundary_trace(&sol.field);
    let coef = project_trace(&trace, a.j_max.max(freq));
    let own_slot = 2 * (freq - 1)
        + match kind {
            plap_core::fem::CurrentKind::Cos => 0,
            plap_core::fem::CurrentKind::Sin => 1,
        };
    println!(
        "solve: current {} p={} tau={}: trace coefficient {} = {:.8} ({} Newton steps, residual {:.2e})",
        a.current,
        a.p,
        a.tau,
        a.current,
        coef[own_slot],
        sol.diagnostics.steps,
        sol.diagnostics.final_residual
    );
    for step in &sol.diagnostics.trace {
        log::info!(
            "newton stage_p={} step={} residual={:.3e} damping={} energy={:.6e}",
            step.stage_p,
            step.step,
            step.residual,
            step.damping,
            step.energy
        );
    }
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("solution.txt"))?);
        writeln!(w, "# nodal values, gauge node {}", sol.field.gauge())?;
        for (i, v) in sol.field.values().iter().enumerate() {
            writeln!(w, "{} {:.17e}", i, v)?;
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("trace.csv"))?);
        writeln!(w, "slot,coefficient")?;
        for (i, c) in coef.iter().enumerate() {
            let name = if i % 2 == 0 { "cos" } else { "sin" };
            writeln!(w, "{}{},{:.12e}", name, i / 2 + 1, c)?;
        }
        write_manifest(
            &out.join("manifest.json"),
            serde_json::json!({
                "command": "solve",
                "p": a.p, "tau": a.tau, "current": a.current,
                "mesh_n": a.mesh.mesh_n, "cells": a.mesh.cells,
                "param": a.param, "tol": a.tol,
                "newton_steps": sol.diagnostics.steps,
                "final_residual": sol.diagnostics.final_residual,
                "mesh_hash": format!("{:016x}", fem.mesh().hash()),
            }),
        )?;
    }
    Ok(())
}

fn cmd_jacobian(a: JacobianArgs) -> Result<(), Failure> {
    let fem = fem_context(a.mesh.mesh_n, a.mesh.cells)?;
    let parametrization = parse_param(&a.param)?;
    let prm = params(a.p, a.tau)?;
    let sigma0 = ConductivityField::homogeneous(fem.partition().clone(), Parametrization::Std);
    let opts = SolverOptions::default();
    let (jac, u0) = assemble_jacobian(&fem, &sigma0, &prm, a.j_max, parametrization, &opts)?;
    std::fs::create_dir_all(&a.out)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(a.out.join("jacobian.csv"))?);
    jac.write_csv(&mut w)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(a.out.join("u0.csv"))?);
    u0.write_csv(&mut w)?;
    write_manifest(
        &a.out.join("manifest.json"),
        serde_json::json!({
            "command": "jacobian",
            "p": a.p, "tau": a.tau, "param": a.param, "j_max": a.j_max,
            "rows": jac.rows(), "cols": jac.cols(),
            "mesh_n": a.mesh.mesh_n, "cells": a.mesh.cells,
            "mesh_hash": format!("{:016x}", fem.mesh().hash()),
        }),
    )?;
    println!(
        "jacobian: {}x{} ({}) -> {}",
        jac.rows(),
        jac.cols(),
        a.param,
        a.out.join("jacobian.csv").display()
    );
    Ok(())
}

fn cmd_proptest(a: ProptestArgs) -> Result<(), Failure> {
    if a.samples == 0 || !(a.p_min > 1.0) || a.p_max < a.p_min || a.tau_min < 0.0 || a.tau_max < a.tau_min {
        return Err(Failure::config("bad proptest ranges"));
    }
    match verify_inequalities(a.samples, a.seed, (a.p_min, a.p_max), (a.tau_min, a.tau_max)) {
        Ok(report) => {
            for check in &report.checks {
                println!(
                    "{:26} checked {:8} violations {:2} worst margin {:+.2e}",
                    check.name, check.checked, check.violations, check.worst_margin
                );
            }
            println!(
                "calibrated constants: third-derivative {:.4}, monotonicity {:.4}, lipschitz {:.4}",
                report.constants.c_third, report.constants.c_monotone, report.constants.c_lipschitz
            );
            println!("proptest: PASS ({} samples)", report.samples);
            Ok(())
        }
        Err(e) => Err(Failure::property(e.to_string())),
    }
}

fn cmd_sample(a: SampleArgs) -> Result<(), Failure> {
    let sample = parse_sample(&a.sample)?;
    let mesh = Arc::new(build_disk_mesh(a.mesh.mesh_n).map_err(|e| Failure::config(e.to_string()))?);
    let partition =
        Arc::new(build_partition_auto(&mesh, a.mesh.cells).map_err(|e| Failure::config(e.to_string()))?);
    let model = covariance_for_sample(&partition, sample).map_err(|e| Failure::config(e.to_string()))?;
    let draws = sample_logconductivity(&model, a.members, derive_seed(a.seed, Stream::SampleDraw, 0))
        .map_err(|e| Failure::solver(e.to_string()))?;
    let m = partition.n_cells();
    let stat = (std::f64::consts::PI / m as f64).sqrt()
        * draws.iter().map(|k| k.norm()).sum::<f64>()
        / draws.len() as f64;
    println!(
        "sample {}: {} members on {} cells, sqrt(pi/M) E|kappa| = {:.4}",
        sample.label(),
        a.members,
        m,
        stat
    );
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out)?;
        let path = out.join(format!("sample_{}.csv", sample.label()));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "# schema=logconductivity-sample-v1 sample={} varsigma2={} b={} seed={}",
            sample.label(), sample.varsigma2(), sample.corr_len(), a.seed)?;
        for kappa in &draws {
            let row: Vec<String> = kappa.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        write_manifest(
            &out.join("manifest.json"),
            serde_json::json!({
                "command": "sample",
                "sample": sample.label(), "members": a.members, "seed": a.seed,
                "varsigma2": sample.varsigma2(), "b": sample.corr_len(),
                "cells": m, "statistic": stat,
                "mesh_hash": format!("{:016x}", mesh.hash()),
            }),
        )?;
    }
    Ok(())
}

fn cmd_linerr(a: LinerrArgs) -> Result<(), Failure> {
    let sample = parse_sample(&a.sample)?;
    let parametrization = parse_param(&a.param)?;
    let prm = params(a.p, a.tau)?;
    let fem = fem_context(a.mesh.mesh_n, a.mesh.cells)?;
    let model = covariance_for_sample(fem.partition(), sample)
        .map_err(|e| Failure::config(e.to_string()))?;
    let kappas = sample_logconductivity(&model, a.members, derive_seed(a.seed, Stream::SampleDraw, 0))
        .map_err(|e| Failure::solver(e.to_string()))?;
    let sigma0 = ConductivityField::homogeneous(fem.partition().clone(), Parametrization::Std);
    let opts = SolverOptions {
        max_newton_steps: 200,
        ..Default::default()
    };
    let (jacs, u0) = plap_core::sensitivity::assemble_jacobians(
        &fem,
        &sigma0,
        &prm,
        a.j_max,
        &[parametrization],
        &opts,
    )?;
    let point = linearization_error(&fem, &kappas, parametrization, &prm, &jacs[0], &u0, &opts)?;
    println!(
        "linerr sample {} param {} p={} tau={}: e = {:.6e} ({} members, {} skipped)",
        sample.label(),
        a.param,
        a.p,
        a.tau,
        point.e,
        point.members,
        point.skipped
    );
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out)?;
        write_manifest(
            &out.join("linerr.json"),
            serde_json::json!({
                "command": "linerr",
                "sample": sample.label(), "param": a.param,
                "p": a.p, "tau": a.tau, "members": point.members,
                "skipped": point.skipped, "e": point.e, "seed": a.seed,
                "mesh_n": a.mesh.mesh_n, "cells": a.mesh.cells,
            }),
        )?;
    }
    Ok(())
}

fn cmd_invert(a: InvertArgs) -> Result<(), Failure> {
    let sample = parse_sample(&a.sample)?;
    let parametrization = parse_param(&a.param)?;
    let prm = params(a.p, a.tau)?;
    let opts = SolverOptions {
        max_newton_steps: 200,
        ..Default::default()
    };
    let ctx = build_context(a.mesh.mesh_n, a.mesh.cells, a.j_max, a.seed, opts)?;
    let model = covariance_for_sample(ctx.fem.partition(), sample)
        .map_err(|e| Failure::config(e.to_string()))?;
    let kappas = sample_logconductivity(&model, a.members, derive_seed(a.seed, Stream::SampleDraw, 0))
        .map_err(|e| Failure::solver(e.to_string()))?;
    let operator_p = a.misspecify_p2.then_some(2.0);
    let point = reconstruction_error(
        &ctx,
        &model,
        &kappas,
        parametrization,
        &prm,
        operator_p,
        a.lambda,
        a.seed,
        3,
    )?;
    println!(
        "invert sample {} param {} p={} tau={} lambda={:.1e}{}: iota = {:.6e} ({} members, {} skipped, {} clipped cells)",
        sample.label(),
        a.param,
        a.p,
        a.tau,
        a.lambda,
        if a.misspecify_p2 { " operators at p=2" } else { "" },
        point.iota,
        point.members,
        point.skipped,
        point.clipped_cells
    );
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out)?;
        for (member, kappa) in &point.snapshots {
            let path = out.join(format!("recon_m{member}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(w, "cell,kappa_target,kappa_reco")?;
            for i in 0..kappa.len() {
                writeln!(w, "{},{:.12e},{:.12e}", i, kappas[*member][i], kappa[i])?;
            }
        }
        write_manifest(
            &out.join("invert.json"),
            serde_json::json!({
                "command": "invert",
                "sample": sample.label(), "param": a.param,
                "p": a.p, "tau": a.tau, "lambda": a.lambda,
                "operator_p": operator_p.unwrap_or(a.p),
                "members": point.members, "skipped": point.skipped,
                "clipped_cells": point.clipped_cells, "iota": point.iota,
                "seed": a.seed, "mesh_n": a.mesh.mesh_n, "cells": a.mesh.cells,
                "mesh_hash": format!("{:016x}", ctx.fem.mesh().hash()),
                "data_mesh_hash": format!("{:016x}", ctx.data_fem.mesh().hash()),
            }),
        )?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut config: SweepConfig = config::parse_sweep_config(&a.config)?;
    if let Some(out) = a.out {
        config.out_dir = out;
    }
    let summary = sweep(&config)?;
    println!(
        "sweep: {} linearization rows, {} reconstruction rows -> {}",
        summary.linerr_rows,
        summary.reconerr_rows,
        summary.out_dir.display()
    );
    if !summary.failures.is_empty() {
        for f in &summary.failures {
            eprintln!("sweep block failed: {f}");
        }
        return Err(Failure::solver(format!(
            "{} sweep blocks failed; partial results written",
            summary.failures.len()
        )));
    }
    Ok(())
}
