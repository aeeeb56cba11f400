//! Linear derivative problem and Jacobian assembly.
//!
//! At a converged forward solution u the derivative of the measurement map
//! with respect to a coefficient perturbation solves a linear problem with
//! the Hessian-weighted tangent bilinear form on the left and
//! `-int eta w(sigma) Dphi(grad u) . grad v` on the right, where the weight
//! w encodes the parametrization (1, sigma^(1-r)/r, or sigma). One tangent
//! factorization per current serves all cells and all parametrizations.

use crate::conductivity::{ConductivityField, Parametrization};
use crate::energy::EnergyParams;
use crate::error::{MeasurementError, SolverError};
use crate::fem::{FemContext, NodalField};
use crate::linalg::ProfileCholesky;
use crate::measurement::{project_trace, trig_currents, MeasurementVector};
use crate::solver::{p2_base, solve_forward_from_p2, SolverOptions};
use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;
use std::io::{BufRead, Write};

/// Coefficient perturbation: a single cell indicator or a full cell vector.
pub enum Eta<'a> {
    Cell(usize),
    Field(&'a DVector<f64>),
}

/// Factorized tangent at a forward solution, ready to solve derivative
/// problems for many perturbations.
pub struct TangentOperator<'a> {
    fem: &'a FemContext,
    chol: ProfileCholesky,
    sigma_cells: DVector<f64>,
    /// Dphi(grad u) per triangle.
    dphi_tri: Vec<Vector2<f64>>,
    p: f64,
}

/// Assemble and factor the tangent at u; the tau = 0 gradient floor matches
/// the forward Newton assembly.
pub fn tangent_at<'a>(
    fem: &'a FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    u: &NodalField,
    opts: &SolverOptions,
) -> Result<TangentOperator<'a>, SolverError> {
    if u.values().len() != fem.mesh().node_count() {
        return Err(SolverError::MeshMismatch);
    }
    let sigma_tri = fem.sigma_per_tri(sigma, params.p())?;
    let tangent = fem.assemble_tangent(&sigma_tri, params, u.values(), opts.eps_reg);
    let chol = tangent.factor().map_err(|_| SolverError::SingularTangent)?;

    let mesh = fem.mesh();
    let mut dphi_tri = Vec::with_capacity(mesh.tri_count());
    for t in 0..mesh.tri_count() {
        let [a, b, c] = mesh.triangles()[t];
        let g = fem.basis_gradients(t);
        let gu = g[0] * u.values()[a] + g[1] * u.values()[b] + g[2] * u.values()[c];
        dphi_tri.push(gu * params.grad_scale(gu.norm_squared()));
    }
    Ok(TangentOperator {
        fem,
        chol,
        sigma_cells: sigma.sigma_cells(params.p()),
        dphi_tri,
        p: params.p(),
    })
}

impl TangentOperator<'_> {
    /// Solve the derivative problem for one perturbation, gauge-fixed.
    pub fn solve_eta(
        &self,
        eta: &Eta,
        parametrization: Parametrization,
    ) -> Result<NodalField, SolverError> {
        let fem = self.fem;
        let mesh = fem.mesh();
        let mut rhs = vec![0.0; fem.n_reduced()];
        let mut add_tri = |t: usize, eta_val: f64| {
            if eta_val == 0.0 {
                return;
            }
            let cell = fem.partition().cell_of_tri()[t];
            let w = parametrization.derivative_weight(self.sigma_cells[cell], self.p);
            let coeff = -eta_val * w * mesh.areas()[t];
            let tri = mesh.triangles()[t];
            let g = fem.basis_gradients(t);
            for v in 0..3 {
                if let Some(r) = fem.reduced_index(tri[v]) {
                    rhs[r] += coeff * self.dphi_tri[t].dot(&g[v]);
                }
            }
        };
        match eta {
            Eta::Cell(i) => {
                if *i >= fem.partition().n_cells() {
                    return Err(SolverError::MeshMismatch);
                }
                for &t in fem.partition().tris_of_cell(*i) {
                    add_tri(t, 1.0);
                }
            }
            Eta::Field(vals) => {
                if vals.len() != fem.partition().n_cells() {
                    return Err(SolverError::MeshMismatch);
                }
                for t in 0..mesh.tri_count() {
                    add_tri(t, vals[fem.partition().cell_of_tri()[t]]);
                }
            }
        }
        let full = fem.reduced_to_full(&self.chol.solve(&rhs));
        Ok(NodalField::new(full, fem.gauge()))
    }
}

/// Solve the derivative problem at (sigma, u) for one perturbation.
pub fn solve_derivative(
    fem: &FemContext,
    sigma: &ConductivityField,
    u: &NodalField,
    eta: &Eta,
    params: &EnergyParams,
    parametrization: Parametrization,
    opts: &SolverOptions,
) -> Result<NodalField, SolverError> {
    tangent_at(fem, sigma, params, u, opts)?.solve_eta(eta, parametrization)
}

/// Dense sensitivity matrix of the measurement map: rows follow the
/// measurement layout, columns are the partition cells.
#[derive(Clone, Debug)]
pub struct JacobianMatrix {
    pub matrix: DMatrix<f64>,
    pub p: f64,
    pub tau: f64,
    pub parametrization: Parametrization,
    pub j_max: usize,
    pub mesh_hash: u64,
}

impl JacobianMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// CSV export with a metadata header.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# schema=jacobian-v1")?;
        writeln!(
            w,
            "# p={} tau={} param={} j_max={} mesh={:016x} rows={} cols={}",
            self.p,
            self.tau,
            self.parametrization.label(),
            self.j_max,
            self.mesh_hash,
            self.rows(),
            self.cols()
        )?;
        for i in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|j| format!("{:.17e}", self.matrix[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> std::io::Result<Self> {
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
        let mut lines = r.lines();
        let schema = lines.next().transpose()?.ok_or_else(|| bad("empty file"))?;
        if schema.trim() != "# schema=jacobian-v1" {
            return Err(bad("unknown schema"));
        }
        let meta = lines.next().transpose()?.ok_or_else(|| bad("missing metadata"))?;
        let mut p = None;
        let mut tau = None;
        let mut param = None;
        let mut j_max = None;
        let mut mesh_hash = None;
        let mut rows = None;
        let mut cols = None;
        for field in meta.trim_start_matches('#').split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("bad metadata field"))?;
            match key {
                "p" => p = value.parse().ok(),
                "tau" => tau = value.parse().ok(),
                "param" => param = Parametrization::parse(value),
                "j_max" => j_max = value.parse().ok(),
                "mesh" => mesh_hash = u64::from_str_radix(value, 16).ok(),
                "rows" => rows = value.parse().ok(),
                "cols" => cols = value.parse().ok(),
                _ => return Err(bad(&format!("unknown metadata key {key}"))),
            }
        }
        let (rows, cols): (usize, usize) =
            (rows.ok_or_else(|| bad("missing rows"))?, cols.ok_or_else(|| bad("missing cols"))?);
        let mut matrix = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| bad("truncated matrix"))?;
            for (j, v) in line.split(',').enumerate() {
                if j >= cols {
                    return Err(bad("row too long"));
                }
                matrix[(i, j)] = v
                    .trim()
                    .parse()
                    .map_err(|_| bad(&format!("bad value at ({i},{j})")))?;
            }
        }
        Ok(JacobianMatrix {
            matrix,
            p: p.ok_or_else(|| bad("missing p"))?,
            tau: tau.ok_or_else(|| bad("missing tau"))?,
            parametrization: param.ok_or_else(|| bad("missing param"))?,
            j_max: j_max.ok_or_else(|| bad("missing j_max"))?,
            mesh_hash: mesh_hash.ok_or_else(|| bad("missing mesh hash"))?,
        })
    }
}

/// Assemble the Jacobians of the measurement map at a base conductivity for
/// several parametrizations at once, sharing the forward solves and tangent
/// factorizations. Also returns the base measurement (the linearization
/// point U0). Each parametrization builds its own right-hand sides through
/// its weight formula.
pub fn assemble_jacobians(
    fem: &FemContext,
    sigma0: &ConductivityField,
    params: &EnergyParams,
    j_max: usize,
    parametrizations: &[Parametrization],
    opts: &SolverOptions,
) -> Result<(Vec<JacobianMatrix>, MeasurementVector), MeasurementError> {
    let currents = trig_currents(j_max, fem.mesh())?;
    let n_cells = fem.partition().n_cells();
    let n_coef = 2 * j_max;
    let rows = currents.len() * n_coef;

    let mut mats: Vec<DMatrix<f64>> = parametrizations
        .iter()
        .map(|_| DMatrix::zeros(rows, n_cells))
        .collect();
    let mut u0 = DVector::zeros(rows);

    let base = p2_base(fem, sigma0, params)?;
    for (ci, f) in currents.iter().enumerate() {
        let sol = solve_forward_from_p2(fem, sigma0, params, f, opts, &base)?;
        let coef = project_trace(&fem.boundary_trace(&sol.field), j_max);
        u0.rows_mut(ci * n_coef, n_coef).copy_from(&coef);

        let op = tangent_at(fem, sigma0, params, &sol.field, opts)?;
        let columns: Vec<Vec<DVector<f64>>> = (0..n_cells)
            .into_par_iter()
            .map(|cell| {
                parametrizations
                    .iter()
                    .map(|&pz| {
                        let du = op
                            .solve_eta(&Eta::Cell(cell), pz)
                            .expect("factorized tangent solve cannot fail");
                        project_trace(&fem.boundary_trace(&du), j_max)
                    })
                    .collect()
            })
            .collect();
        for (cell, per_param) in columns.iter().enumerate() {
            for (k, col) in per_param.iter().enumerate() {
                mats[k]
                    .view_mut((ci * n_coef, cell), (n_coef, 1))
                    .copy_from(col);
            }
        }
    }

    let jacobians = parametrizations
        .iter()
        .zip(mats)
        .map(|(&pz, matrix)| JacobianMatrix {
            matrix,
            p: params.p(),
            tau: params.tau(),
            parametrization: pz,
            j_max,
            mesh_hash: fem.mesh().hash(),
        })
        .collect();
    Ok((jacobians, MeasurementVector::new(u0, j_max)))
}

/// Jacobian for a single parametrization.
pub fn assemble_jacobian(
    fem: &FemContext,
    sigma0: &ConductivityField,
    params: &EnergyParams,
    j_max: usize,
    parametrization: Parametrization,
    opts: &SolverOptions,
) -> Result<(JacobianMatrix, MeasurementVector), MeasurementError> {
    let (mut jacs, u0) = assemble_jacobians(fem, sigma0, params, j_max, &[parametrization], opts)?;
    Ok((jacs.remove(0), u0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::simulate_measurement;
    use crate::mesh::build_disk_mesh;
    use crate::partition::build_partition_auto;
    use crate::solver::solve_forward;
    use std::sync::Arc;

    fn context(n: usize, cells: usize) -> FemContext {
        let mesh = Arc::new(build_disk_mesh(n).unwrap());
        let partition = Arc::new(build_partition_auto(&mesh, cells).unwrap());
        FemContext::new(mesh, partition).unwrap()
    }

    fn base_field(fem: &FemContext) -> ConductivityField {
        ConductivityField::homogeneous(fem.partition().clone(), Parametrization::Std)
    }

    #[test]
    fn zero_perturbation_gives_zero_derivative() {
        let fem = context(32, 8);
        let sigma = base_field(&fem);
        let params = EnergyParams::new(2.5, 0.1).unwrap();
        let opts = SolverOptions::default();
        let f = trig_currents(1, fem.mesh()).unwrap().remove(0);
        let sol = solve_forward(&fem, &sigma, &params, &f, &opts).unwrap();
        let eta = DVector::zeros(8);
        let du = solve_derivative(
            &fem,
            &sigma,
            &sol.field,
            &Eta::Field(&eta),
            &params,
            Parametrization::Std,
            &opts,
        )
        .unwrap();
        assert_eq!(du.values().norm(), 0.0);
    }

    #[test]
    fn derivative_is_linear_in_eta() {
        let fem = context(32, 8);
        let sigma = base_field(&fem);
        let params = EnergyParams::new(1.7, 0.1).unwrap();
        let opts = SolverOptions::default();
        let f = trig_currents(1, fem.mesh()).unwrap().remove(0);
        let sol = solve_forward(&fem, &sigma, &params, &f, &opts).unwrap();
        let op = tangent_at(&fem, &sigma, &params, &sol.field, &opts).unwrap();

        let e1 = DVector::from_fn(8, |i, _| (i as f64 * 0.71).sin());
        let e2 = DVector::from_fn(8, |i, _| (i as f64 * 1.13).cos());
        let combo = &e1 * 0.3 - &e2 * 1.7;
        let u1 = op.solve_eta(&Eta::Field(&e1), Parametrization::Std).unwrap();
        let u2 = op.solve_eta(&Eta::Field(&e2), Parametrization::Std).unwrap();
        let uc = op
            .solve_eta(&Eta::Field(&combo), Parametrization::Std)
            .unwrap();
        let err = (uc.values() - (u1.values() * 0.3 - u2.values() * 1.7)).norm()
            / uc.values().norm();
        assert!(err < 1e-12, "linearity error {err:.2e}");
    }

    /// Central-difference validation of Jacobian columns on sigma.
    #[test]
    fn jacobian_matches_finite_differences() {
        let fem = context(32, 8);
        let sigma0 = base_field(&fem);
        let opts = SolverOptions::with_tol(1e-12);
        let j_max = 2;
        for &(p, tau) in &[(1.5, 0.0), (2.0, 0.0), (3.0, 0.1)] {
            let params = EnergyParams::new(p, tau).unwrap();
            let (jac, _) =
                assemble_jacobian(&fem, &sigma0, &params, j_max, Parametrization::Std, &opts)
                    .unwrap();
            let h = 1e-4;
            for cell in [0usize, 3, 7] {
                let mut vp = DVector::from_element(8, 1.0);
                vp[cell] += h;
                let mut vm = DVector::from_element(8, 1.0);
                vm[cell] -= h;
                let up = simulate_measurement(
                    &fem,
                    &ConductivityField::new(fem.partition().clone(), vp, Parametrization::Std)
                        .unwrap(),
                    &params,
                    j_max,
                    &opts,
                )
                .unwrap();
                let um = simulate_measurement(
                    &fem,
                    &ConductivityField::new(fem.partition().clone(), vm, Parametrization::Std)
                        .unwrap(),
                    &params,
                    j_max,
                    &opts,
                )
                .unwrap();
                let fd = (up.values() - um.values()) / (2.0 * h);
                let col = jac.matrix.column(cell);
                let err = (&fd - &col).norm() / col.norm();
                assert!(err < 1e-3, "p={p} tau={tau} cell={cell}: error {err:.2e}");
            }
        }
    }

    /// At p = 2 the measurement map derivative inherits the reciprocity of
    /// the linear problem: entry (current c, mode m) equals (current m,
    /// mode c) for every cell.
    #[test]
    fn reciprocity_at_p_two() {
        let fem = context(32, 8);
        let sigma0 = base_field(&fem);
        let params = EnergyParams::new(2.0, 0.0).unwrap();
        let (jac, _) = assemble_jacobian(
            &fem,
            &sigma0,
            &params,
            2,
            Parametrization::Std,
            &SolverOptions::default(),
        )
        .unwrap();
        let n = 4; // currents = coefficient modes
        for cell in 0..8 {
            for c in 0..n {
                for m in 0..n {
                    let a = jac.matrix[(c * n + m, cell)];
                    let b = jac.matrix[(m * n + c, cell)];
                    assert!(
                        (a - b).abs() <= 1e-8 * a.abs().max(1.0),
                        "cell {cell}: ({c},{m}) {a} vs {b}"
                    );
                }
            }
        }
    }

    /// Chain rule at the homogeneous base point: J_exp = J_std and
    /// J_pwr(r) = (1/r) J_std.
    #[test]
    fn parametrization_chain_rule_at_base_point() {
        let fem = context(32, 8);
        let sigma0 = base_field(&fem);
        let params = EnergyParams::new(2.5, 0.0).unwrap();
        let (jacs, _) = assemble_jacobians(
            &fem,
            &sigma0,
            &params,
            2,
            &Parametrization::ALL,
            &SolverOptions::default(),
        )
        .unwrap();
        let std = &jacs[0].matrix;
        let scale = std.amax();
        let inv_err = (&jacs[1].matrix + std).amax();
        assert!(inv_err <= 1e-8 * scale, "inv: {inv_err:.2e}");
        let r_nat = Parametrization::Nat.power(params.p()).unwrap();
        let nat_err = (&jacs[2].matrix - std * (1.0 / r_nat)).amax();
        assert!(nat_err <= 1e-8 * scale, "nat: {nat_err:.2e}");
        let exp_err = (&jacs[3].matrix - std).amax();
        assert!(exp_err <= 1e-8 * scale, "exp: {exp_err:.2e}");
    }

    #[test]
    fn csv_roundtrip() {
        let jac = JacobianMatrix {
            matrix: DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 1.0),
            p: 2.5,
            tau: 0.1,
            parametrization: Parametrization::Nat,
            j_max: 1,
            mesh_hash: 0xdeadbeef,
        };
        let mut buf = Vec::new();
        jac.write_csv(&mut buf).unwrap();
        let back = JacobianMatrix::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.matrix, jac.matrix);
        assert_eq!(back.parametrization, jac.parametrization);
        assert_eq!(back.mesh_hash, jac.mesh_hash);
        assert_eq!(back.p, jac.p);
    }
}
