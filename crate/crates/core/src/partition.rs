//! Piecewise-constant conductivity partition of the disk.
//!
//! Cells are polar boxes: `m_rings` annuli of equal radial width, each split
//! into a sector count proportional to its mean radius, which keeps cell
//! areas close to `pi / M`. Triangles are assigned by centroid.

use crate::error::MeshError;
use crate::mesh::MeshGeometry;
use nalgebra::Vector2;
use std::f64::consts::TAU;

#[derive(Clone, Debug)]
pub struct Partition {
    n_cells: usize,
    cell_of_tri: Vec<usize>,
    tris_of_cell: Vec<Vec<usize>>,
    cell_areas: Vec<f64>,
    centroids: Vec<Vector2<f64>>,
    mesh_hash: u64,
    target: usize,
    m_rings: usize,
}

impl Partition {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell index of each triangle.
    pub fn cell_of_tri(&self) -> &[usize] {
        &self.cell_of_tri
    }

    /// Triangles of one cell.
    pub fn tris_of_cell(&self, cell: usize) -> &[usize] {
        &self.tris_of_cell[cell]
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    /// Area-weighted cell centers x̂_i.
    pub fn centroids(&self) -> &[Vector2<f64>] {
        &self.centroids
    }

    pub fn mesh_hash(&self) -> u64 {
        self.mesh_hash
    }

    pub fn target_cells(&self) -> usize {
        self.target
    }

    pub fn m_rings(&self) -> usize {
        self.m_rings
    }

    /// Rebuild a partition from an explicit triangle-to-cell assignment
    /// (e.g. the partition column of a mesh file).
    pub fn from_assignment(mesh: &MeshGeometry, cell_of_tri: Vec<usize>) -> Result<Self, MeshError> {
        if cell_of_tri.len() != mesh.tri_count() {
            return Err(MeshError::PartitionFailure(
                "assignment length does not match triangle count".into(),
            ));
        }
        let n_cells = cell_of_tri.iter().copied().max().map_or(0, |m| m + 1);
        finish(mesh, cell_of_tri, n_cells, n_cells, 0)
    }
}

/// Ring/sector layout for a given ring count and cell target: the sector
/// count of annulus l (1-based) is round(target * (2l-1) / m_rings^2), which
/// sums to the target exactly before rounding.
fn sector_counts(m_rings: usize, target: usize) -> Vec<usize> {
    (1..=m_rings)
        .map(|l| {
            let ideal = target as f64 * (2 * l - 1) as f64 / (m_rings * m_rings) as f64;
            (ideal.round() as usize).max(1)
        })
        .collect()
}

/// Polar-grid partition with the given annulus count, targeting
/// `target_cells` near-equal-area cells.
pub fn build_partition(
    mesh: &MeshGeometry,
    m_rings: usize,
    target_cells: usize,
) -> Result<Partition, MeshError> {
    if m_rings == 0 || target_cells == 0 {
        return Err(MeshError::PartitionFailure(
            "need at least one ring and one cell".into(),
        ));
    }
    if target_cells > mesh.tri_count() / 4 {
        return Err(MeshError::PartitionFailure(format!(
            "target of {target_cells} cells is too fine for {} triangles",
            mesh.tri_count()
        )));
    }
    let sectors = sector_counts(m_rings, target_cells);
    let offsets: Vec<usize> = sectors
        .iter()
        .scan(0usize, |acc, &s| {
            let off = *acc;
            *acc += s;
            Some(off)
        })
        .collect();
    let n_cells = sectors.iter().sum();

    let mut cell_of_tri = Vec::with_capacity(mesh.tri_count());
    for t in 0..mesh.tri_count() {
        let c = mesh.centroid(t);
        let r = c.norm();
        let ring = ((r * m_rings as f64).floor() as usize).min(m_rings - 1);
        let s = sectors[ring];
        let theta = c.y.atan2(c.x).rem_euclid(TAU);
        let sector = ((theta / (TAU / s as f64)).floor() as usize).min(s - 1);
        cell_of_tri.push(offsets[ring] + sector);
    }
    repair_connectivity(mesh, &mut cell_of_tri, n_cells);

    finish(mesh, cell_of_tri, n_cells, target_cells, m_rings)
}

/// Centroid assignment can strand one or two triangles at a polar-box corner
/// with no same-cell edge neighbor. Reassign every non-dominant connected
/// component of a cell to the neighboring cell it touches the most.
fn repair_connectivity(mesh: &MeshGeometry, cell_of_tri: &mut [usize], n_cells: usize) {
    use std::collections::HashMap;
    let t = mesh.tri_count();
    let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(3); t];
    let mut by_edge: HashMap<(usize, usize), usize> = HashMap::new();
    for (ti, &[a, b, c]) in mesh.triangles().iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let key = (u.min(v), u.max(v));
            if let Some(&tj) = by_edge.get(&key) {
                adj[ti].push(tj);
                adj[tj].push(ti);
            } else {
                by_edge.insert(key, ti);
            }
        }
    }

    for _ in 0..16 {
        // label connected components within each cell
        let mut comp = vec![usize::MAX; t];
        let mut comp_area: Vec<f64> = Vec::new();
        let mut comp_cell: Vec<usize> = Vec::new();
        for start in 0..t {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = comp_area.len();
            comp_area.push(0.0);
            comp_cell.push(cell_of_tri[start]);
            let mut stack = vec![start];
            comp[start] = id;
            while let Some(ti) = stack.pop() {
                comp_area[id] += mesh.areas()[ti];
                for &tj in &adj[ti] {
                    if comp[tj] == usize::MAX && cell_of_tri[tj] == cell_of_tri[ti] {
                        comp[tj] = id;
                        stack.push(tj);
                    }
                }
            }
        }
        // dominant component per cell = largest area
        let mut dominant: Vec<Option<usize>> = vec![None; n_cells];
        for id in 0..comp_area.len() {
            let cell = comp_cell[id];
            match dominant[cell] {
                None => dominant[cell] = Some(id),
                Some(d) if comp_area[id] > comp_area[d] => dominant[cell] = Some(id),
                _ => {}
            }
        }
        let mut changed = false;
        for id in 0..comp_area.len() {
            let cell = comp_cell[id];
            if dominant[cell] == Some(id) {
                continue;
            }
            // most-touched neighboring cell, smallest id on ties
            let mut touch: HashMap<usize, usize> = HashMap::new();
            for ti in 0..t {
                if comp[ti] != id {
                    continue;
                }
                for &tj in &adj[ti] {
                    if cell_of_tri[tj] != cell {
                        *touch.entry(cell_of_tri[tj]).or_insert(0) += 1;
                    }
                }
            }
            if let Some((&target, _)) = touch
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            {
                for ti in 0..t {
                    if comp[ti] == id {
                        cell_of_tri[ti] = target;
                    }
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Pick a near-square ring count for the target and build the partition.
pub fn build_partition_auto(mesh: &MeshGeometry, target_cells: usize) -> Result<Partition, MeshError> {
    let m_rings = ((target_cells as f64 / std::f64::consts::PI).sqrt().round() as usize).max(1);
    build_partition(mesh, m_rings, target_cells)
}

fn finish(
    mesh: &MeshGeometry,
    cell_of_tri: Vec<usize>,
    n_cells: usize,
    target: usize,
    m_rings: usize,
) -> Result<Partition, MeshError> {
    let mut cell_areas = vec![0.0; n_cells];
    let mut weighted = vec![Vector2::new(0.0, 0.0); n_cells];
    let mut tris_of_cell: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for (t, &c) in cell_of_tri.iter().enumerate() {
        let a = mesh.areas()[t];
        cell_areas[c] += a;
        weighted[c] += mesh.centroid(t) * a;
        tris_of_cell[c].push(t);
    }
    if let Some(empty) = cell_areas.iter().position(|&a| a == 0.0) {
        return Err(MeshError::PartitionFailure(format!(
            "cell {empty} received no triangle"
        )));
    }
    let centroids = weighted
        .iter()
        .zip(&cell_areas)
        .map(|(w, &a)| w / a)
        .collect();
    Ok(Partition {
        n_cells,
        cell_of_tri,
        tris_of_cell,
        cell_areas,
        centroids,
        mesh_hash: mesh.hash(),
        target,
        m_rings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;
    use std::f64::consts::PI;

    #[test]
    fn sector_layout_sums_near_target() {
        // the reference configuration comes out exact
        assert_eq!(sector_counts(17, 960).iter().sum::<usize>(), 960);
        let desk: usize = sector_counts(9, 240).iter().sum();
        assert!((desk as f64 - 240.0).abs() <= 12.0);
    }

    #[test]
    fn whole_domain_cell() {
        let mesh = build_disk_mesh(16).unwrap();
        let p = build_partition(&mesh, 1, 1).unwrap();
        assert_eq!(p.n_cells(), 1);
        assert!((p.cell_areas()[0] - mesh.total_area()).abs() < 1e-12);
        assert!(p.centroids()[0].norm() < 5e-2);
    }

    #[test]
    fn desk_partition_area_spread() {
        let mesh = build_disk_mesh(128).unwrap();
        let p = build_partition_auto(&mesh, 240).unwrap();
        assert!((p.n_cells() as f64 - 240.0).abs() <= 0.05 * 240.0);
        let ideal = PI / p.n_cells() as f64;
        for (i, &a) in p.cell_areas().iter().enumerate() {
            assert!(
                (a - ideal).abs() <= 0.25 * ideal,
                "cell {i}: area {a:.4e} vs ideal {ideal:.4e}"
            );
        }
        // partition areas sum to the mesh area exactly (same summands)
        let total: f64 = p.cell_areas().iter().sum();
        assert!((total - mesh.total_area()).abs() < 1e-12 * total);
    }

    #[test]
    fn paper_scale_partition_on_fine_mesh() {
        let mesh = build_disk_mesh(256).unwrap();
        let p = build_partition_auto(&mesh, 960).unwrap();
        assert_eq!(p.n_cells(), 960);
        let ideal = PI / 960.0;
        let worst = p
            .cell_areas()
            .iter()
            .map(|&a| ((a - ideal) / ideal).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 0.25, "worst relative spread {worst:.3}");
    }

    #[test]
    fn rejects_too_fine_targets() {
        let mesh = build_disk_mesh(16).unwrap();
        assert!(build_partition_auto(&mesh, 64).is_err());
    }

    #[test]
    fn cells_are_edge_connected() {
        let mesh = build_disk_mesh(128).unwrap();
        let p = build_partition_auto(&mesh, 240).unwrap();
        // union-find over triangles sharing an edge within the same cell
        let t = mesh.tri_count();
        let mut parent: Vec<usize> = (0..t).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut by_edge: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for (ti, &[a, b, c]) in mesh.triangles().iter().enumerate() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let key = (u.min(v), u.max(v));
                if let Some(&tj) = by_edge.get(&key) {
                    if p.cell_of_tri()[ti] == p.cell_of_tri()[tj] {
                        let (ri, rj) = (find(&mut parent, ti), find(&mut parent, tj));
                        parent[ri] = rj;
                    }
                } else {
                    by_edge.insert(key, ti);
                }
            }
        }
        let mut root_of_cell: Vec<Option<usize>> = vec![None; p.n_cells()];
        for ti in 0..t {
            let cell = p.cell_of_tri()[ti];
            let root = find(&mut parent, ti);
            match root_of_cell[cell] {
                None => root_of_cell[cell] = Some(root),
                Some(r) => assert_eq!(r, root, "cell {cell} is disconnected"),
            }
        }
    }

    #[test]
    fn from_assignment_roundtrip() {
        let mesh = build_disk_mesh(32).unwrap();
        let p = build_partition_auto(&mesh, 12).unwrap();
        let q = Partition::from_assignment(&mesh, p.cell_of_tri().to_vec()).unwrap();
        assert_eq!(q.n_cells(), p.n_cells());
        for (a, b) in q.centroids().iter().zip(p.centroids()) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}
