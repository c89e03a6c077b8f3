use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{split_seed, Execution};

/// Slack in the connectivity threshold `p > (1 + ε) ln n / n`.
pub const CONNECTIVITY_EPSILON: f64 = 0.1;

/// Undirected weighted graph in compressed sparse row form.
///
/// Every edge appears in both endpoint rows. Weights lie in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl Graph {
    /// Builds a graph from `(u, v, w)` edges, each listed once.
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Result<Self> {
        if n == 0 || n > u32::MAX as usize {
            return Err(Error::config(format!("node count {n} out of range")));
        }
        for &(u, v, w) in edges {
            if u == v {
                return Err(Error::config(format!("self-loop at node {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::config(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::config(format!("edge ({u}, {v}) has weight {w} outside (0, 1]")));
            }
        }
        let mut degree = vec![0usize; n];
        for &(u, v, _) in edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        Ok(Self::assemble(n, &degree, edges.iter().copied()))
    }

    fn assemble(n: usize, degree: &[usize], edges: impl Iterator<Item = (u32, u32, f64)>) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = offsets[n];
        let mut targets = vec![0u32; total];
        let mut weights = vec![0f64; total];
        let mut fill = offsets[..n].to_vec();
        for (u, v, w) in edges {
            for (a, b) in [(u, v), (v, u)] {
                let slot = &mut fill[a as usize];
                targets[*slot] = b;
                weights[*slot] = w;
                *slot += 1;
            }
        }
        Graph { offsets, targets, weights }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// `(target, weight)` pairs of `node`'s row.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = self.offsets[node]..self.offsets[node + 1];
        self.targets[row.clone()].iter().map(|&t| t as usize).zip(self.weights[row].iter().copied())
    }

    /// Each edge once, as `(u, v, w)` with `u < v`, ordered by `u`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u).filter(move |&(v, _)| u < v).map(move |(v, w)| (u, v, w))
        })
    }
}

/// Smallest edge probability accepted for `n` nodes (exclusive).
pub fn connectivity_threshold(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    (1.0 + CONNECTIVITY_EPSILON) * (n as f64).ln() / n as f64
}

/// Erdős-Rényi graph: each of the `n(n-1)/2` edges is present independently
/// with probability `p` and weighted uniformly on `(0, 1]`.
///
/// Row `u` (edges to `v > u`) draws from its own stream, so the graph depends
/// only on `(n, p, seed)` and not on `exec`.
pub fn generate_graph(n: usize, p: f64, seed: u64, exec: Execution) -> Result<Graph> {
    if n == 0 {
        return Err(Error::config("a graph needs at least one node"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config(format!("edge probability {p} outside (0, 1]")));
    }
    if p <= connectivity_threshold(n) {
        return Err(Error::config(format!(
            "edge probability {p} at or below the connectivity threshold {:.6} for n={n}",
            connectivity_threshold(n)
        )));
    }
    let rows: Vec<Vec<(u32, f64)>> = exec.map_range(0..n, |u| {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, u as u64));
        let mut row = Vec::new();
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                // gen() is in [0, 1), so this is in (0, 1]
                row.push((v as u32, 1.0 - rng.gen::<f64>()));
            }
        }
        row
    });
    let mut degree = vec![0usize; n];
    for (u, row) in rows.iter().enumerate() {
        degree[u] += row.len();
        for &(v, _) in row {
            degree[v as usize] += 1;
        }
    }
    let edges = rows
        .iter()
        .enumerate()
        .flat_map(|(u, row)| row.iter().map(move |&(v, w)| (u as u32, v, w)));
    Ok(Graph::assemble(n, &degree, edges))
}

/// Source node for a run, uniform over `0..n` and fixed by `seed`.
pub fn source_for_seed(n: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(split_seed(seed, u64::MAX)).gen_range(0..n)
}
