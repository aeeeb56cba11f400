//! Piecewise-linear finite element atoms shared by the forward and
//! derivative solvers: precomputed basis gradients, boundary quadrature
//! weights, gauge bookkeeping, and residual/tangent/load assembly.
//!
//! Gradients of P1 basis functions are constant per triangle, so all domain
//! integrals are evaluated exactly; boundary integrals use the trapezoid
//! rule on the uniformly spaced boundary nodes.

use crate::conductivity::ConductivityField;
use crate::energy::EnergyParams;
use crate::error::SolverError;
use crate::linalg::{ProfileMatrix, SymbolicProfile};
use crate::mesh::MeshGeometry;
use crate::partition::Partition;
use nalgebra::{DVector, Vector2};
use std::sync::Arc;

/// Finite-element coefficient vector on the mesh nodes, pinned to zero at
/// the gauge node.
#[derive(Clone, Debug)]
pub struct NodalField {
    values: DVector<f64>,
    gauge: usize,
}

impl NodalField {
    pub fn new(values: DVector<f64>, gauge: usize) -> Self {
        debug_assert_eq!(values[gauge], 0.0, "gauge node must be pinned to zero");
        NodalField { values, gauge }
    }

    pub fn zeros(n: usize, gauge: usize) -> Self {
        NodalField {
            values: DVector::zeros(n),
            gauge,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn gauge(&self) -> usize {
        self.gauge
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentKind {
    Cos,
    Sin,
}

/// Boundary current density sampled at the boundary nodes (ordered by
/// angle). Must have zero mean against the boundary quadrature.
#[derive(Clone, Debug)]
pub struct BoundaryCurrent {
    pub kind: CurrentKind,
    pub frequency: usize,
    pub samples: DVector<f64>,
}

impl BoundaryCurrent {
    pub fn label(&self) -> String {
        match self.kind {
            CurrentKind::Cos => format!("cos{}", self.frequency),
            CurrentKind::Sin => format!("sin{}", self.frequency),
        }
    }
}

/// Precomputed assembly data for one mesh/partition pair. Immutable and
/// freely shareable between concurrent solves.
pub struct FemContext {
    mesh: Arc<MeshGeometry>,
    partition: Arc<Partition>,
    grads: Vec<[Vector2<f64>; 3]>,
    gauge: usize,
    /// node -> reduced index; usize::MAX at the gauge node
    reduced_of: Vec<usize>,
    boundary_weights: Vec<f64>,
    symbolic: Arc<SymbolicProfile>,
}

const GAUGE: usize = usize::MAX;

impl FemContext {
    pub fn new(mesh: Arc<MeshGeometry>, partition: Arc<Partition>) -> Result<Self, SolverError> {
        if partition.mesh_hash() != mesh.hash() {
            return Err(SolverError::MeshMismatch);
        }
        let grads: Vec<[Vector2<f64>; 3]> = mesh
            .triangles()
            .iter()
            .zip(mesh.areas())
            .map(|(&[a, b, c], &area)| {
                let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
                let s = 1.0 / (2.0 * area);
                [
                    Vector2::new(pb.y - pc.y, pc.x - pb.x) * s,
                    Vector2::new(pc.y - pa.y, pa.x - pc.x) * s,
                    Vector2::new(pa.y - pb.y, pb.x - pa.x) * s,
                ]
            })
            .collect();

        let gauge = mesh.gauge_node();
        let mut reduced_of = vec![GAUGE; mesh.node_count()];
        let mut next = 0usize;
        for i in 0..mesh.node_count() {
            if i != gauge {
                reduced_of[i] = next;
                next += 1;
            }
        }

        let nb = mesh.boundary_count();
        let mut boundary_weights = Vec::with_capacity(nb);
        for k in 0..nb {
            let prev = mesh.nodes()[mesh.boundary()[(k + nb - 1) % nb]];
            let here = mesh.nodes()[mesh.boundary()[k]];
            let nextp = mesh.nodes()[mesh.boundary()[(k + 1) % nb]];
            boundary_weights.push(0.5 * ((here - prev).norm() + (nextp - here).norm()));
        }

        // reduced adjacency from triangle edges
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); next];
        for &[a, b, c] in mesh.triangles() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let (ru, rv) = (reduced_of[u], reduced_of[v]);
                if ru == GAUGE || rv == GAUGE {
                    continue;
                }
                if !adjacency[ru].contains(&rv) {
                    adjacency[ru].push(rv);
                    adjacency[rv].push(ru);
                }
            }
        }
        let symbolic = SymbolicProfile::from_adjacency(&adjacency);

        Ok(FemContext {
            mesh,
            partition,
            grads,
            gauge,
            reduced_of,
            boundary_weights,
            symbolic,
        })
    }

    pub fn mesh(&self) -> &Arc<MeshGeometry> {
        &self.mesh
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn gauge(&self) -> usize {
        self.gauge
    }

    pub fn n_reduced(&self) -> usize {
        self.symbolic.n()
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// P1 basis gradients on one triangle, in vertex order.
    pub fn basis_gradients(&self, t: usize) -> &[Vector2<f64>; 3] {
        &self.grads[t]
    }

    /// Reduced index of a node; None at the gauge node.
    pub fn reduced_index(&self, node: usize) -> Option<usize> {
        let r = self.reduced_of[node];
        (r != GAUGE).then_some(r)
    }

    /// Conductivity per triangle; rejects fields living on another mesh.
    pub fn sigma_per_tri(
        &self,
        field: &ConductivityField,
        p: f64,
    ) -> Result<Vec<f64>, SolverError> {
        if field.partition().mesh_hash() != self.mesh.hash()
            || field.partition().n_cells() != self.partition.n_cells()
        {
            return Err(SolverError::MeshMismatch);
        }
        let sigma_cells = field.sigma_cells(p);
        Ok(self
            .partition
            .cell_of_tri()
            .iter()
            .map(|&c| sigma_cells[c])
            .collect())
    }

    /// Boundary load vector (reduced numbering) for a zero-mean current.
    pub fn load_vector(&self, current: &BoundaryCurrent) -> Result<DVector<f64>, SolverError> {
        let nb = self.mesh.boundary_count();
        if current.samples.len() != nb {
            return Err(SolverError::InvalidCurrent(format!(
                "current has {} samples for {} boundary nodes",
                current.samples.len(),
                nb
            )));
        }
        let mut mean = 0.0;
        let mut scale = 0.0;
        for k in 0..nb {
            mean += current.samples[k] * self.boundary_weights[k];
            scale += current.samples[k].abs() * self.boundary_weights[k];
        }
        if mean.abs() > 1e-10 * scale.max(1e-300) {
            return Err(SolverError::InvalidCurrent(format!(
                "current is not zero-mean (quadrature mean {mean:.3e})"
            )));
        }
        let mut load = DVector::zeros(self.n_reduced());
        for k in 0..nb {
            let r = self.reduced_of[self.mesh.boundary()[k]];
            if r != GAUGE {
                load[r] += current.samples[k] * self.boundary_weights[k];
            }
        }
        Ok(load)
    }

    #[inline]
    fn grad_on_tri(&self, u: &DVector<f64>, t: usize) -> Vector2<f64> {
        let [a, b, c] = self.mesh.triangles()[t];
        let g = &self.grads[t];
        g[0] * u[a] + g[1] * u[b] + g[2] * u[c]
    }

    /// Galerkin residual of the nonlinear form (without the load term), in
    /// reduced numbering.
    pub fn assemble_residual(
        &self,
        sigma_tri: &[f64],
        params: &EnergyParams,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_reduced());
        for t in 0..self.mesh.tri_count() {
            let gu = self.grad_on_tri(u, t);
            let gs = params.grad_scale(gu.norm_squared());
            let w = sigma_tri[t] * self.mesh.areas()[t] * gs;
            let tri = self.mesh.triangles()[t];
            let g = &self.grads[t];
            for v in 0..3 {
                let rv = self.reduced_of[tri[v]];
                if rv != GAUGE {
                    r[rv] += w * gu.dot(&g[v]);
                }
            }
        }
        r
    }

    /// Tangent stiffness at u (the Hessian-weighted bilinear form), with the
    /// tau = 0 gradient floor applied per triangle.
    pub fn assemble_tangent(
        &self,
        sigma_tri: &[f64],
        params: &EnergyParams,
        u: &DVector<f64>,
        eps_reg: f64,
    ) -> ProfileMatrix {
        let mut m = ProfileMatrix::zeros(self.symbolic.clone());
        for t in 0..self.mesh.tri_count() {
            let gu = self.grad_on_tri(u, t);
            let (ha, hb) = params.hessian_coeffs_floored(gu.norm_squared(), eps_reg);
            let w = sigma_tri[t] * self.mesh.areas()[t];
            let tri = self.mesh.triangles()[t];
            let g = &self.grads[t];
            let hg = [gu.dot(&g[0]), gu.dot(&g[1]), gu.dot(&g[2])];
            for i in 0..3 {
                let ri = self.reduced_of[tri[i]];
                if ri == GAUGE {
                    continue;
                }
                for j in 0..=i {
                    let rj = self.reduced_of[tri[j]];
                    if rj == GAUGE {
                        continue;
                    }
                    let val = w * (ha * g[i].dot(&g[j]) + hb * hg[i] * hg[j]);
                    m.add(ri, rj, val);
                }
            }
        }
        m
    }

    /// Energy value: the sigma-weighted smoothed p-energy of the gradient
    /// minus the boundary work of the current.
    pub fn energy_value(
        &self,
        sigma_tri: &[f64],
        params: &EnergyParams,
        u: &DVector<f64>,
        current: &BoundaryCurrent,
    ) -> f64 {
        let mut e = 0.0;
        for t in 0..self.mesh.tri_count() {
            let gu = self.grad_on_tri(u, t);
            e += sigma_tri[t] * self.mesh.areas()[t] * params.phi_from_sq(gu.norm_squared());
        }
        for k in 0..self.mesh.boundary_count() {
            e -= current.samples[k] * u[self.mesh.boundary()[k]] * self.boundary_weights[k];
        }
        e
    }

    /// Nodal values along the boundary, ordered by angle.
    pub fn boundary_trace(&self, u: &NodalField) -> Vec<f64> {
        self.mesh
            .boundary()
            .iter()
            .map(|&b| u.values()[b])
            .collect()
    }

    /// L2 norm of the piecewise-constant gradient of u.
    pub fn gradient_l2_norm(&self, u: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for t in 0..self.mesh.tri_count() {
            s += self.mesh.areas()[t] * self.grad_on_tri(u, t).norm_squared();
        }
        s.sqrt()
    }

    /// Expand a reduced vector to a full nodal vector with 0 at the gauge.
    pub fn reduced_to_full(&self, reduced: &[f64]) -> DVector<f64> {
        let mut full = DVector::zeros(self.mesh.node_count());
        for i in 0..self.mesh.node_count() {
            let r = self.reduced_of[i];
            if r != GAUGE {
                full[i] = reduced[r];
            }
        }
        full
    }
}
