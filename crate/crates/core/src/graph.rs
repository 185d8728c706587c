//! Sparse undirected simple graph in compressed adjacency form.

use crate::error::{Error, Result};

/// Undirected simple graph on `0..n` with sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicates are merged; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut deg = vec![0usize; n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::params(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::params(format!("self-loop at vertex {i}")));
            }
            deg[i] += 1;
            deg[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(i, j) in edges {
            neighbors[fill[i]] = j as u32;
            fill[i] += 1;
            neighbors[fill[j]] = i as u32;
            fill[j] += 1;
        }
        // sort and dedup each row, then compact
        let mut out_off = vec![0usize; n + 1];
        let mut out = Vec::with_capacity(neighbors.len());
        for i in 0..n {
            let row = &mut neighbors[offsets[i]..offsets[i + 1]];
            row.sort_unstable();
            let mut last = None;
            for &v in row.iter() {
                if last != Some(v) {
                    out.push(v);
                    last = Some(v);
                }
            }
            out_off[i + 1] = out.len();
        }
        Ok(Graph {
            offsets: out_off,
            neighbors: out,
        })
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Row offsets of the symmetric CSR form.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Column indices of the symmetric CSR form.
    pub fn indices(&self) -> &[u32] {
        &self.neighbors
    }

    /// Applies a vertex relabelling: vertex `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges: Vec<_> = self.edges().map(|(i, j)| (perm[i], perm[j])).collect();
        Graph::from_edges(self.n(), &edges).expect("permutation preserves validity")
    }
}
