//! Unit-disk triangulations.
//!
//! Meshes come from a structured polar template: concentric rings of nodes
//! with per-ring counts proportional to radius, stitched ring-to-ring by an
//! angular sweep and relaxed with a few Laplacian smoothing passes. Boundary
//! nodes are pinned to the exact roots of unity, so boundary angles are
//! reproducible to the last bit. A seeded variant jitters the interior
//! seeding to produce a genuinely different triangulation of the same disk
//! for data simulation versus reconstruction.

use crate::error::MeshError;
use nalgebra::Vector2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::io::{BufRead, Write};

/// Interior node spacing relative to the boundary spacing 2*pi/N. The
/// slightly denser interior matches the reference discretization scale
/// (roughly 28k nodes / 55k triangles at N = 512).
const INTERIOR_DENSITY: f64 = 1.16;

const SMOOTHING_SWEEPS: usize = 4;

/// Conforming triangulation of the unit disk.
#[derive(Clone, Debug)]
pub struct MeshGeometry {
    nodes: Vec<Vector2<f64>>,
    triangles: Vec<[usize; 3]>,
    /// Boundary node indices ordered by increasing polar angle; entry k sits
    /// at angle 2*pi*k/N exactly.
    boundary: Vec<usize>,
    areas: Vec<f64>,
    hash: u64,
}

impl MeshGeometry {
    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tri_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.len()
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Stable content hash over node coordinates, connectivity and boundary
    /// order; used to detect mesh mismatches between pipeline stages.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn centroid(&self, tri: usize) -> Vector2<f64> {
        let [a, b, c] = self.triangles[tri];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary.contains(&node)
    }

    /// Deterministic interior node nearest the origin; serves as the gauge
    /// node for the quotient-space solves.
    pub fn gauge_node(&self) -> usize {
        let mut best = usize::MAX;
        let mut best_r = f64::INFINITY;
        let boundary: std::collections::HashSet<usize> = self.boundary.iter().copied().collect();
        for (i, p) in self.nodes.iter().enumerate() {
            if boundary.contains(&i) {
                continue;
            }
            let r = p.norm_squared();
            if r < best_r {
                best_r = r;
                best = i;
            }
        }
        best
    }
}

fn signed_area(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
}

fn fnv1a(state: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *state ^= b as u64;
        *state = state.wrapping_mul(0x0000_0100_0000_01b3);
    }
}

fn compute_hash(nodes: &[Vector2<f64>], triangles: &[[usize; 3]], boundary: &[usize]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for p in nodes {
        fnv1a(&mut h, &p.x.to_le_bytes());
        fnv1a(&mut h, &p.y.to_le_bytes());
    }
    for t in triangles {
        for &v in t {
            fnv1a(&mut h, &(v as u64).to_le_bytes());
        }
    }
    for &b in boundary {
        fnv1a(&mut h, &(b as u64).to_le_bytes());
    }
    h
}

struct JitterSpec {
    radial: f64,
    angular: f64,
    count_wobble: bool,
}

/// Build the polar template. `jitter` perturbs the interior seeding only;
/// the boundary ring is always the exact uniform one.
fn generate(
    n_boundary: usize,
    jitter: Option<(&mut ChaCha8Rng, &JitterSpec)>,
) -> Result<MeshGeometry, MeshError> {
    if n_boundary < 16 || n_boundary % 2 != 0 {
        return Err(MeshError::GenerationFailure(format!(
            "boundary node count must be an even integer >= 16, got {n_boundary}"
        )));
    }
    let n_eff = (INTERIOR_DENSITY * n_boundary as f64).round();
    let m_rings = ((n_eff / TAU).round() as usize).max(2);

    let mut rng_jitter = jitter;

    let mut nodes: Vec<Vector2<f64>> = vec![Vector2::new(0.0, 0.0)];
    let mut ring_nodes: Vec<Vec<usize>> = Vec::with_capacity(m_rings);
    let mut ring_angles: Vec<Vec<f64>> = Vec::with_capacity(m_rings);

    for m in 1..=m_rings {
        let last = m == m_rings;
        let mut count = if last {
            n_boundary
        } else {
            ((n_eff * m as f64 / m_rings as f64).round() as usize).max(4)
        };
        let mut radius = m as f64 / m_rings as f64;
        let mut offset = 0.0;
        let mut wobbles: Vec<(f64, f64)> = Vec::new();
        if let Some((rng, spec)) = rng_jitter.as_mut() {
            if !last {
                if spec.count_wobble {
                    let delta: i64 = rng.random_range(-1..=1);
                    count = ((count as i64 + delta).max(4)) as usize;
                }
                radius += rng.random_range(-spec.radial..=spec.radial) / m_rings as f64;
                let gap = TAU / count as f64;
                offset = rng.random_range(0.0..gap);
                wobbles = (0..count)
                    .map(|_| {
                        (
                            rng.random_range(-spec.angular..=spec.angular) * gap,
                            rng.random_range(-spec.radial..=spec.radial) / m_rings as f64,
                        )
                    })
                    .collect();
            }
        }

        let mut idxs = Vec::with_capacity(count);
        let mut angs = Vec::with_capacity(count);
        for k in 0..count {
            let (da, dr) = wobbles.get(k).copied().unwrap_or((0.0, 0.0));
            let theta = offset + TAU * k as f64 / count as f64 + da;
            let r = radius + dr;
            let p = if last {
                // exact boundary placement
                let t = TAU * k as f64 / count as f64;
                Vector2::new(t.cos(), t.sin())
            } else {
                Vector2::new(r * theta.cos(), r * theta.sin())
            };
            idxs.push(nodes.len());
            angs.push(theta);
            nodes.push(p);
        }
        ring_nodes.push(idxs);
        ring_angles.push(angs);
    }

    // Hub fan around the center node.
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let first = &ring_nodes[0];
    for k in 0..first.len() {
        triangles.push([0, first[k], first[(k + 1) % first.len()]]);
    }

    // Stitch consecutive rings with an angular merge sweep.
    for m in 0..m_rings - 1 {
        let (inner, outer) = (&ring_nodes[m], &ring_nodes[m + 1]);
        let (ia, oa) = (&ring_angles[m], &ring_angles[m + 1]);
        let na = inner.len();
        let nb = outer.len();
        let ang = |arr: &Vec<f64>, i: usize, n: usize| {
            if i < n {
                arr[i]
            } else {
                arr[i - n] + TAU
            }
        };
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            let advance_inner = if i == na {
                false
            } else if j == nb {
                true
            } else {
                ang(ia, i + 1, na) <= ang(oa, j + 1, nb)
            };
            if advance_inner {
                triangles.push([inner[i % na], outer[j % nb], inner[(i + 1) % na]]);
                i += 1;
            } else {
                triangles.push([inner[i % na], outer[j % nb], outer[(j + 1) % nb]]);
                j += 1;
            }
        }
    }

    let boundary = ring_nodes[m_rings - 1].clone();
    smooth_interior(&mut nodes, &triangles, &boundary, SMOOTHING_SWEEPS);

    let areas: Vec<f64> = triangles
        .iter()
        .map(|&[a, b, c]| signed_area(nodes[a], nodes[b], nodes[c]))
        .collect();
    if let Some((tri, &bad)) = areas
        .iter()
        .enumerate()
        .find(|(_, &a)| !(a > f64::MIN_POSITIVE))
    {
        return Err(MeshError::GenerationFailure(format!(
            "triangle {tri} has non-positive area {bad:.3e}"
        )));
    }

    let hash = compute_hash(&nodes, &triangles, &boundary);
    Ok(MeshGeometry {
        nodes,
        triangles,
        boundary,
        areas,
        hash,
    })
}

fn smooth_interior(
    nodes: &mut [Vector2<f64>],
    triangles: &[[usize; 3]],
    boundary: &[usize],
    sweeps: usize,
) {
    let n = nodes.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &[a, b, c] in triangles {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if !neighbors[u].contains(&v) {
                neighbors[u].push(v);
            }
            if !neighbors[v].contains(&u) {
                neighbors[v].push(u);
            }
        }
    }
    let mut fixed = vec![false; n];
    for &b in boundary {
        fixed[b] = true;
    }
    for _ in 0..sweeps {
        for i in 0..n {
            if fixed[i] || neighbors[i].is_empty() {
                continue;
            }
            let mut acc = Vector2::new(0.0, 0.0);
            for &j in &neighbors[i] {
                acc += nodes[j];
            }
            nodes[i] = acc / neighbors[i].len() as f64;
        }
    }
}

/// Quasi-uniform triangulation with `boundary_node_count` uniformly spaced
/// boundary nodes at the exact angles 2*pi*k/N.
pub fn build_disk_mesh(boundary_node_count: usize) -> Result<MeshGeometry, MeshError> {
    generate(boundary_node_count, None)
}

/// A distinct triangulation of the same disk: the interior seeding is
/// jittered by `rng_seed`, the boundary nodes stay put. Used to keep the
/// data-simulation and reconstruction discretizations apart.
pub fn perturb_mesh(mesh: &MeshGeometry, rng_seed: u64) -> Result<MeshGeometry, MeshError> {
    let n = mesh.boundary_count();
    let mut scale = 1.0;
    for attempt in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(attempt));
        let spec = JitterSpec {
            radial: 0.18 * scale,
            angular: 0.22 * scale,
            count_wobble: true,
        };
        match generate(n, Some((&mut rng, &spec))) {
            Ok(m) => return Ok(m),
            Err(_) => scale *= 0.5,
        }
    }
    Err(MeshError::GenerationFailure(
        "could not produce a valid perturbed mesh".into(),
    ))
}

/// Write the mesh (and optionally a per-triangle cell column) as plain text.
pub fn write_mesh<W: Write>(
    mesh: &MeshGeometry,
    cell_of_tri: Option<&[usize]>,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "plap-mesh v1")?;
    writeln!(w, "nodes {}", mesh.node_count())?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(w, "{} {:.17e} {:.17e}", i, p.x, p.y)?;
    }
    writeln!(w, "triangles {}", mesh.tri_count())?;
    for (i, t) in mesh.triangles.iter().enumerate() {
        writeln!(w, "{} {} {} {}", i, t[0], t[1], t[2])?;
    }
    writeln!(w, "boundary {}", mesh.boundary_count())?;
    for (k, b) in mesh.boundary.iter().enumerate() {
        writeln!(w, "{} {}", k, b)?;
    }
    if let Some(cells) = cell_of_tri {
        writeln!(w, "partition {}", cells.len())?;
        for (i, c) in cells.iter().enumerate() {
            writeln!(w, "{} {}", i, c)?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

/// Parse a mesh written by [`write_mesh`], re-validating geometry and
/// conformity. Returns the optional partition column alongside.
pub fn read_mesh<R: BufRead>(r: R) -> Result<(MeshGeometry, Option<Vec<usize>>), MeshError> {
    let mut lines = r.lines().enumerate();
    let mut next = || -> Result<(usize, String), MeshError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(MeshError::Io(e)),
            None => Err(MeshError::InvalidFormat {
                line: 0,
                msg: "unexpected end of file".into(),
            }),
        }
    };
    let bad = |line: usize, msg: &str| MeshError::InvalidFormat {
        line,
        msg: msg.into(),
    };

    let (ln, header) = next()?;
    if header.trim() != "plap-mesh v1" {
        return Err(bad(ln, "expected header 'plap-mesh v1'"));
    }

    let parse_count = |line: usize, text: &str, key: &str| -> Result<usize, MeshError> {
        let mut it = text.split_whitespace();
        if it.next() != Some(key) {
            return Err(bad(line, &format!("expected '{key} <count>'")));
        }
        it.next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(line, &format!("bad {key} count")))
    };

    let (ln, l) = next()?;
    let n_nodes = parse_count(ln, &l, "nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, l) = next()?;
        let mut it = l.split_whitespace();
        let _idx: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad node index"))?;
        let x: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad node x"))?;
        let y: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad node y"))?;
        nodes.push(Vector2::new(x, y));
    }

    let (ln, l) = next()?;
    let n_tris = parse_count(ln, &l, "triangles")?;
    let mut triangles = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (ln, l) = next()?;
        let vals: Vec<usize> = l
            .split_whitespace()
            .map(|v| v.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(ln, "bad triangle row"))?;
        if vals.len() != 4 {
            return Err(bad(ln, "triangle row needs 'index a b c'"));
        }
        let t = [vals[1], vals[2], vals[3]];
        if t.iter().any(|&v| v >= n_nodes) {
            return Err(bad(ln, "triangle node index out of range"));
        }
        triangles.push(t);
    }

    let (ln, l) = next()?;
    let n_bnd = parse_count(ln, &l, "boundary")?;
    let mut boundary = Vec::with_capacity(n_bnd);
    for _ in 0..n_bnd {
        let (ln, l) = next()?;
        let vals: Vec<usize> = l
            .split_whitespace()
            .map(|v| v.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(ln, "bad boundary row"))?;
        if vals.len() != 2 || vals[1] >= n_nodes {
            return Err(bad(ln, "boundary row needs 'k node'"));
        }
        boundary.push(vals[1]);
    }

    let (ln, l) = next()?;
    let mut partition = None;
    let trailer = if l.trim_start().starts_with("partition") {
        let cnt = parse_count(ln, &l, "partition")?;
        if cnt != n_tris {
            return Err(bad(ln, "partition column length must equal triangle count"));
        }
        let mut cells = Vec::with_capacity(cnt);
        for _ in 0..cnt {
            let (ln, l) = next()?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(|v| v.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(ln, "bad partition row"))?;
            if vals.len() != 2 {
                return Err(bad(ln, "partition row needs 'tri cell'"));
            }
            cells.push(vals[1]);
        }
        partition = Some(cells);
        next()?
    } else {
        (ln, l)
    };
    if trailer.1.trim() != "end" {
        return Err(bad(trailer.0, "expected 'end'"));
    }

    let areas: Vec<f64> = triangles
        .iter()
        .map(|&[a, b, c]| signed_area(nodes[a], nodes[b], nodes[c]))
        .collect();
    if areas.iter().any(|&a| !(a > 0.0)) {
        return Err(bad(0, "mesh contains non-positively oriented triangles"));
    }
    let hash = compute_hash(&nodes, &triangles, &boundary);
    let mesh = MeshGeometry {
        nodes,
        triangles,
        boundary,
        areas,
        hash,
    };
    validate_conformity(&mesh).map_err(|msg| bad(0, &msg))?;
    Ok((mesh, partition))
}

/// Checks that every edge is shared by at most two triangles and that the
/// single-triangle edges are exactly the consecutive boundary pairs.
pub fn validate_conformity(mesh: &MeshGeometry) -> Result<(), String> {
    use std::collections::HashMap;
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for &[a, b, c] in &mesh.triangles {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let key = (u.min(v), u.max(v));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let n = mesh.boundary_count();
    for k in 0..n {
        let u = mesh.boundary[k];
        let v = mesh.boundary[(k + 1) % n];
        let key = (u.min(v), u.max(v));
        if edge_count.get(&key) != Some(&1) {
            return Err(format!("boundary edge ({u},{v}) is not a single-triangle edge"));
        }
        edge_count.remove(&key);
    }
    if let Some((&(u, v), &c)) = edge_count.iter().find(|(_, &c)| c != 2) {
        return Err(format!("interior edge ({u},{v}) belongs to {c} triangles"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_boundary_counts() {
        assert!(build_disk_mesh(8).is_err());
        assert!(build_disk_mesh(17).is_err());
        assert!(build_disk_mesh(16).is_ok());
    }

    #[test]
    fn smallest_mesh_is_valid() {
        let mesh = build_disk_mesh(16).unwrap();
        validate_conformity(&mesh).expect("conforming");
        assert!(mesh.areas().iter().all(|&a| a > 0.0));
        assert_eq!(mesh.boundary_count(), 16);
    }

    #[test]
    fn boundary_nodes_sit_exactly_on_the_circle() {
        let mesh = build_disk_mesh(64).unwrap();
        for (k, &b) in mesh.boundary().iter().enumerate() {
            let p = mesh.nodes()[b];
            assert!((p.norm() - 1.0).abs() < 1e-12);
            let want = TAU * k as f64 / 64.0;
            let got = p.y.atan2(p.x).rem_euclid(TAU);
            assert!((got - want).abs() < 1e-12, "node {k}");
        }
    }

    #[test]
    fn node_counts_scale_quadratically() {
        let m128 = build_disk_mesh(128).unwrap();
        // about (128/512)^2 * 28k
        assert!(
            (1500..=2100).contains(&m128.node_count()),
            "got {}",
            m128.node_count()
        );
        let m512 = build_disk_mesh(512).unwrap();
        assert!(
            (25_000..=32_000).contains(&m512.node_count()),
            "got {}",
            m512.node_count()
        );
        assert!(
            (50_000..=62_000).contains(&m512.tri_count()),
            "got {}",
            m512.tri_count()
        );
    }

    #[test]
    fn total_area_matches_polygon_deficit() {
        for &n in &[64usize, 128] {
            let mesh = build_disk_mesh(n).unwrap();
            let h = TAU / n as f64;
            assert!(
                (mesh.total_area() - PI).abs() <= 2.0 * h * h,
                "N={n}: area {}",
                mesh.total_area()
            );
        }
    }

    #[test]
    fn edge_lengths_stay_within_factor_two_of_boundary_spacing() {
        let n = 128usize;
        let mesh = build_disk_mesh(n).unwrap();
        let h = TAU / n as f64;
        for &[a, b, c] in mesh.triangles() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let len = (mesh.nodes()[u] - mesh.nodes()[v]).norm();
                assert!(len >= h / 2.0 && len <= 2.0 * h, "edge ({u},{v}) len {len}");
            }
        }
    }

    #[test]
    fn perturbed_mesh_is_distinct_but_valid() {
        let mesh = build_disk_mesh(64).unwrap();
        let pert = perturb_mesh(&mesh, 99).unwrap();
        validate_conformity(&pert).expect("conforming");
        assert_eq!(pert.boundary_count(), 64);
        let diff = (pert.node_count() as f64 - mesh.node_count() as f64).abs();
        assert!(diff / (mesh.node_count() as f64) < 0.05);
        // interior node sets must differ
        let set: std::collections::HashSet<_> = mesh
            .nodes()
            .iter()
            .map(|p| (p.x.to_bits(), p.y.to_bits()))
            .collect();
        let shared = pert
            .nodes()
            .iter()
            .filter(|p| set.contains(&(p.x.to_bits(), p.y.to_bits())))
            .count();
        // only the boundary nodes may coincide
        assert!(shared <= pert.boundary_count());
        assert_ne!(pert.hash(), mesh.hash());
    }

    #[test]
    fn same_seed_reproduces_the_same_mesh() {
        let mesh = build_disk_mesh(32).unwrap();
        let a = perturb_mesh(&mesh, 7).unwrap();
        let b = perturb_mesh(&mesh, 7).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn export_import_roundtrip() {
        let mesh = build_disk_mesh(32).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, None, &mut buf).unwrap();
        let (back, part) = read_mesh(std::io::Cursor::new(buf)).unwrap();
        assert!(part.is_none());
        assert_eq!(back.hash(), mesh.hash());
        assert_eq!(back.node_count(), mesh.node_count());
    }

    #[test]
    fn import_reports_offending_line() {
        let text = "plap-mesh v1\nnodes 1\n0 bad 0.0\n";
        let err = read_mesh(std::io::Cursor::new(text.as_bytes())).unwrap_err();
        match err {
            MeshError::InvalidFormat { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn gauge_node_is_interior_and_near_center() {
        let mesh = build_disk_mesh(32).unwrap();
        let g = mesh.gauge_node();
        assert!(!mesh.is_boundary_node(g));
        assert!(mesh.nodes()[g].norm() < 0.2);
    }
}
