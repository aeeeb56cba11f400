//! Trigonometric boundary currents, trace projection and measurement
//! stacking.
//!
//! Currents are the zero-mean functions cos(j*theta), sin(j*theta) for
//! j = 1..j_max sampled at the boundary nodes; traces are projected back
//! onto the same basis by the trapezoid rule, which is spectrally accurate
//! on the uniform angular grid. A measurement stacks the projected traces of
//! all currents: layout `[cur cos1 | cur sin1 | ... | cur sin j_max]`, each
//! block ordered `cos1, sin1, ..., cos j_max, sin j_max`.

use crate::conductivity::ConductivityField;
use crate::energy::EnergyParams;
use crate::error::{MeasurementError, SolverError};
use crate::fem::{BoundaryCurrent, CurrentKind, FemContext, NodalField};
use crate::solver::{p2_base, solve_forward_from_p2, solve_forward_warm, SolverOptions};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;
use std::io::{BufRead, Write};

/// Stacked trace coefficients for all currents of one measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    values: DVector<f64>,
    j_max: usize,
}

impl MeasurementVector {
    pub fn new(values: DVector<f64>, j_max: usize) -> Self {
        assert_eq!(values.len(), 4 * j_max * j_max, "layout is (2 j_max)^2");
        MeasurementVector { values, j_max }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    fn kind_freq(i: usize) -> (CurrentKind, usize) {
        let kind = if i % 2 == 0 {
            CurrentKind::Cos
        } else {
            CurrentKind::Sin
        };
        (kind, i / 2 + 1)
    }

    /// Label of one slot, e.g. `cur=cos3,coef=sin5`.
    pub fn slot_label(&self, idx: usize) -> String {
        let n_coef = 2 * self.j_max;
        let (ck, cf) = Self::kind_freq(idx / n_coef);
        let (bk, bf) = Self::kind_freq(idx % n_coef);
        let name = |k: CurrentKind, f: usize| match k {
            CurrentKind::Cos => format!("cos{f}"),
            CurrentKind::Sin => format!("sin{f}"),
        };
        format!("cur={},coef={}", name(ck, cf), name(bk, bf))
    }

    /// Single-row CSV with a header naming every slot.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let labels: Vec<String> = (0..self.len()).map(|i| self.slot_label(i)).collect();
        writeln!(w, "{}", labels.join(","))?;
        let vals: Vec<String> = self.values.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", vals.join(","))
    }

    pub fn read_csv<R: BufRead>(r: R, j_max: usize) -> std::io::Result<Self> {
        let mut lines = r.lines();
        let _header = lines.next().transpose()?;
        let row = lines
            .next()
            .transpose()?
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "missing data row"))?;
        let vals: Result<Vec<f64>, _> = row.split(',').map(|v| v.trim().parse()).collect();
        let vals = vals
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{e}")))?;
        Ok(MeasurementVector::new(DVector::from_vec(vals), j_max))
    }
}

/// The first 2*j_max zero-mean trigonometric currents, sampled on the
/// boundary nodes, ordered cos1, sin1, ..., cos j_max, sin j_max.
pub fn trig_currents(
    j_max: usize,
    mesh: &crate::mesh::MeshGeometry,
) -> Result<Vec<BoundaryCurrent>, MeasurementError> {
    let nb = mesh.boundary_count();
    if j_max < 1 || 2 * j_max > nb / 4 {
        return Err(MeasurementError::Aliasing {
            two_j_max: 2 * j_max,
            boundary_nodes: nb,
        });
    }
    let mut out = Vec::with_capacity(2 * j_max);
    for j in 1..=j_max {
        for kind in [CurrentKind::Cos, CurrentKind::Sin] {
            let samples = DVector::from_fn(nb, |k, _| {
                let theta = TAU * k as f64 / nb as f64 * j as f64;
                match kind {
                    CurrentKind::Cos => theta.cos(),
                    CurrentKind::Sin => theta.sin(),
                }
            });
            out.push(BoundaryCurrent {
                kind,
                frequency: j,
                samples,
            });
        }
    }
    Ok(out)
}

/// L2(boundary)-orthogonal projection of a trace onto the zero-mean
/// trigonometric basis; the constant mode is discarded.
pub fn project_trace(trace: &[f64], j_max: usize) -> DVector<f64> {
    let n = trace.len();
    let mut coef = DVector::zeros(2 * j_max);
    for j in 1..=j_max {
        let (mut c, mut s) = (0.0, 0.0);
        for (k, &t) in trace.iter().enumerate() {
            let ang = TAU * k as f64 / n as f64 * j as f64;
            c += t * ang.cos();
            s += t * ang.sin();
        }
        coef[2 * (j - 1)] = 2.0 * c / n as f64;
        coef[2 * (j - 1) + 1] = 2.0 * s / n as f64;
    }
    coef
}

/// Forward-solve all currents for one conductivity and stack the projected
/// traces. `warm` supplies per-current initial iterates (e.g. solutions at a
/// neighboring p); the returned fields can seed the next call.
pub fn simulate_with_state(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    j_max: usize,
    opts: &SolverOptions,
    warm: Option<&[NodalField]>,
) -> Result<(MeasurementVector, Vec<NodalField>), MeasurementError> {
    let currents = trig_currents(j_max, fem.mesh())?;
    if let Some(w) = warm {
        if w.len() != currents.len() {
            return Err(MeasurementError::Solver(SolverError::MeshMismatch));
        }
    }
    let base = match warm {
        Some(_) => None,
        None => Some(p2_base(fem, sigma, params)?),
    };

    let mut values = DVector::zeros(currents.len() * 2 * j_max);
    let mut fields = Vec::with_capacity(currents.len());
    for (ci, f) in currents.iter().enumerate() {
        let sol = match (warm, &base) {
            (Some(w), _) => match solve_forward_warm(fem, sigma, params, f, opts, &w[ci]) {
                Ok(s) => s,
                // fall back to the continuation ladder if the warm start strays
                Err(SolverError::NewtonDivergence { .. }) => {
                    let b = p2_base(fem, sigma, params)?;
                    solve_forward_from_p2(fem, sigma, params, f, opts, &b)?
                }
                Err(e) => return Err(e.into()),
            },
            (None, Some(b)) => solve_forward_from_p2(fem, sigma, params, f, opts, b)?,
            (None, None) => unreachable!(),
        };
        let coef = project_trace(&fem.boundary_trace(&sol.field), j_max);
        values.rows_mut(ci * 2 * j_max, 2 * j_max).copy_from(&coef);
        fields.push(sol.field);
    }
    Ok((MeasurementVector::new(values, j_max), fields))
}

/// Forward-solve all currents and stack the projected traces.
pub fn simulate_measurement(
    fem: &FemContext,
    sigma: &ConductivityField,
    params: &EnergyParams,
    j_max: usize,
    opts: &SolverOptions,
) -> Result<MeasurementVector, MeasurementError> {
    simulate_with_state(fem, sigma, params, j_max, opts, None).map(|(m, _)| m)
}

/// Add i.i.d. zero-mean Gaussian noise of standard deviation `lambda` to
/// every entry; reproducible from the seed.
pub fn add_noise(mv: &MeasurementVector, lambda: f64, rng_seed: u64) -> MeasurementVector {
    assert!(lambda >= 0.0, "noise level must be nonnegative");
    if lambda == 0.0 {
        return mv.clone();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, lambda).expect("valid std");
    let values = mv.values.map(|v| v + normal.sample(&mut rng));
    MeasurementVector::new(values, mv.j_max)
}
