//! Sparse SPD solves for the FEM systems: reverse Cuthill-McKee ordering
//! plus a profile (skyline) Cholesky factorization. The symbolic part is
//! computed once per mesh and shared by every tangent factorization.

use std::sync::Arc;

/// Fill-reducing ordering and row profile for a fixed symmetric sparsity
/// pattern.
#[derive(Debug)]
pub struct SymbolicProfile {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// iperm[old] = new
    iperm: Vec<usize>,
    /// first profile column of each row, in the new numbering
    first_col: Vec<usize>,
    /// offsets into the packed value array; row i spans columns
    /// first_col[i]..=i
    row_ptr: Vec<usize>,
}

impl SymbolicProfile {
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Arc<Self> {
        let n = adjacency.len();
        let perm = reverse_cuthill_mckee(adjacency);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first_col: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = iperm[old];
            for &nb in &adjacency[old] {
                let j = iperm[nb];
                if j < i && j < first_col[i] {
                    first_col[i] = j;
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        for i in 0..n {
            row_ptr.push(row_ptr[i] + (i - first_col[i] + 1));
        }
        Arc::new(SymbolicProfile {
            n,
            perm,
            iperm,
            first_col,
            row_ptr,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stored_entries(&self) -> usize {
        *self.row_ptr.last().unwrap_or(&0)
    }

    #[inline]
    fn pos(&self, row: usize, col: usize) -> usize {
        debug_assert!(col >= self.first_col[row] && col <= row);
        self.row_ptr[row] + (col - self.first_col[row])
    }
}

/// Symmetric matrix stored on a shared profile. Assembled in the original
/// numbering; the permutation is applied internally.
pub struct ProfileMatrix {
    sym: Arc<SymbolicProfile>,
    vals: Vec<f64>,
}

impl ProfileMatrix {
    pub fn zeros(sym: Arc<SymbolicProfile>) -> Self {
        let vals = vec![0.0; sym.stored_entries()];
        ProfileMatrix { sym, vals }
    }

    /// Accumulate into entry (i, j) of the symmetric matrix (original
    /// numbering). Only one of (i, j)/(j, i) needs to be added.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (pi, pj) = (self.sym.iperm[i], self.sym.iperm[j]);
        let (row, col) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let pos = self.sym.pos(row, col);
        self.vals[pos] += v;
    }

    /// In-place Cholesky of the profile matrix. Fails on non-positive pivots.
    pub fn factor(mut self) -> Result<ProfileCholesky, FactorError> {
        let n = self.sym.n;
        let fc = &self.sym.first_col;
        let rp = &self.sym.row_ptr;
        let v = &mut self.vals;
        for i in 0..n {
            let fci = fc[i];
            for j in fci..i {
                let fcj = fc[j];
                let k0 = fci.max(fcj);
                let off_i = rp[i] + (k0 - fci);
                let off_j = rp[j] + (k0 - fcj);
                let len = j - k0;
                let mut s = 0.0;
                for k in 0..len {
                    s += v[off_i + k] * v[off_j + k];
                }
                let pos_ij = rp[i] + (j - fci);
                let diag_j = v[rp[j] + (j - fcj)];
                v[pos_ij] = (v[pos_ij] - s) / diag_j;
            }
            let off_i = rp[i];
            let len = i - fci;
            let mut s = 0.0;
            for k in 0..len {
                s += v[off_i + k] * v[off_i + k];
            }
            let pos_ii = rp[i] + (i - fci);
            let d = v[pos_ii] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(FactorError::NotPositiveDefinite { row: i, pivot: d });
            }
            v[pos_ii] = d.sqrt();
        }
        Ok(ProfileCholesky {
            sym: self.sym,
            vals: self.vals,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FactorError {
    #[error("matrix not positive definite at row {row} (pivot {pivot:.3e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
}

/// Factorized SPD profile matrix; solves many right-hand sides cheaply.
pub struct ProfileCholesky {
    sym: Arc<SymbolicProfile>,
    vals: Vec<f64>,
}

impl ProfileCholesky {
    /// Solve A x = b in the original numbering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.sym.n;
        debug_assert_eq!(b.len(), n);
        let fc = &self.sym.first_col;
        let rp = &self.sym.row_ptr;
        let v = &self.vals;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = b[self.sym.perm[i]];
        }
        // forward: L y' = y
        for i in 0..n {
            let fci = fc[i];
            let off = rp[i];
            let mut s = 0.0;
            for (k, col) in (fci..i).enumerate() {
                s += v[off + k] * y[col];
            }
            y[i] = (y[i] - s) / v[rp[i] + (i - fci)];
        }
        // backward: L^T x = y', row-oriented saxpy
        for i in (0..n).rev() {
            let fci = fc[i];
            let off = rp[i];
            let xi = y[i] / v[rp[i] + (i - fci)];
            y[i] = xi;
            for (k, col) in (fci..i).enumerate() {
                y[col] -= v[off + k] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.sym.perm[i]] = y[i];
        }
        x
    }
}

/// Reverse Cuthill-McKee ordering; returns perm with perm[new] = old.
fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last_level = |start: usize, visited_scratch: &mut Vec<bool>| -> usize {
        visited_scratch.iter_mut().for_each(|v| *v = false);
        let mut frontier = vec![start];
        visited_scratch[start] = true;
        let mut last = start;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &adjacency[u] {
                    if !visited_scratch[w] {
                        visited_scratch[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                // lowest-degree node of the deepest level
                last = *frontier
                    .iter()
                    .min_by_key(|&&u| (degree[u], u))
                    .unwrap();
            }
            frontier = next;
        }
        last
    };

    let mut scratch = vec![false; n];
    while order.len() < n {
        // component seed: unvisited node of minimum degree
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // one BFS round trip approximates a pseudo-peripheral start
        let start = bfs_last_level(seed, &mut scratch);
        let start = if visited[start] { seed } else { start };

        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbs: Vec<usize> = adjacency[u].iter().copied().filter(|&w| !visited[w]).collect();
            nbs.sort_unstable_by_key(|&w| (degree[w], w));
            for w in nbs {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}
