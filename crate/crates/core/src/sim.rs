//! Phase-model SSSP simulator with optional ρ-relaxation.
//!
//! Active nodes live in an array sorted by `(δ, id)`. Each phase relaxes the
//! first `P` of them synchronously. With `ρ > 0`, nodes activated in a phase
//! are shuffled and numbered, and the `ρ` highest-numbered active nodes are
//! held out of the array; the overall minimum is never held out. A phase
//! that finds fewer than `P` nodes in the array tops up with a uniform
//! sample of the held-out nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{split_seed, Execution};
use crate::sched::PriorityKey;
use crate::sssp::{dijkstra_oracle, generate_graph, source_for_seed, Graph};
use crate::theory::{useless_work_bound, BoundInput};

/// Order of active nodes: by distance, then by node id.
pub fn tie_break(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub places: usize,
    pub rho: usize,
    pub seed: u64,
    /// Edge probability fed to the bound; the graph's density when `None`.
    pub edge_probability: Option<f64>,
    pub compute_bound: bool,
}

impl SimParams {
    pub fn new(places: usize, rho: usize, seed: u64) -> Self {
        SimParams { places, rho, seed, edge_probability: None, compute_bound: true }
    }

    pub fn with_edge_probability(mut self, p: f64) -> Self {
        self.edge_probability = Some(p);
        self
    }

    pub fn without_bound(mut self) -> Self {
        self.compute_bound = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMetrics {
    pub phase: usize,
    pub relaxed: usize,
    pub settled: usize,
    pub useless: usize,
    pub h_star: f64,
    pub active_size: usize,
    pub bound_useless: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Phase {
    pub metrics: PhaseMetrics,
    /// Nodes relaxed in this phase, in `(δ, id)` order.
    pub relaxed_nodes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Inactive,
    Sorted,
    Held(u64),
}

pub struct Simulator<'g> {
    graph: &'g Graph,
    params: SimParams,
    p: f64,
    oracle: Vec<f64>,
    delta: Vec<f64>,
    status: Vec<Status>,
    sorted: BTreeSet<(PriorityKey, usize)>,
    held: BTreeMap<u64, usize>,
    next_seq: u64,
    rng: ChaCha8Rng,
    phase: usize,
    best: Vec<f64>,
}

impl<'g> Simulator<'g> {
    pub fn new(graph: &'g Graph, source: usize, params: SimParams) -> Result<Self> {
        let n = graph.node_count();
        if params.places == 0 {
            return Err(Error::config("simulation needs at least one place"));
        }
        if source >= n {
            return Err(Error::config(format!("source {source} outside 0..{n}")));
        }
        let p = match params.edge_probability {
            Some(p) => p,
            None if n >= 2 => (2.0 * graph.edge_count() as f64 / (n as f64 * (n - 1) as f64)).max(f64::MIN_POSITIVE),
            None => 1.0,
        };
        let mut sim = Simulator {
            graph,
            p,
            oracle: dijkstra_oracle(graph, source),
            delta: vec![f64::INFINITY; n],
            status: vec![Status::Inactive; n],
            sorted: BTreeSet::new(),
            held: BTreeMap::new(),
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            phase: 0,
            best: vec![f64::INFINITY; n],
            params,
        };
        sim.delta[source] = 0.0;
        sim.status[source] = Status::Sorted;
        sim.sorted.insert((PriorityKey::new(0.0), source));
        Ok(sim)
    }

    fn entry(&self, v: usize) -> (PriorityKey, usize) {
        (PriorityKey::new(self.delta[v]), v)
    }

    fn detach(&mut self, v: usize) {
        match self.status[v] {
            Status::Sorted => {
                self.sorted.remove(&self.entry(v));
            }
            Status::Held(seq) => {
                self.held.remove(&seq);
            }
            Status::Inactive => {}
        }
        self.status[v] = Status::Inactive;
    }

    fn move_to_sorted(&mut self, v: usize) {
        self.detach(v);
        self.status[v] = Status::Sorted;
        self.sorted.insert(self.entry(v));
    }

    pub fn active(&self) -> usize {
        self.sorted.len() + self.held.len()
    }

    pub fn held_out(&self) -> usize {
        self.held.len()
    }

    pub fn distances(&self) -> &[f64] {
        &self.delta
    }

    /// Runs one phase; `None` once no node is active.
    pub fn step(&mut self) -> Option<Phase> {
        if self.active() == 0 {
            return None;
        }
        let places = self.params.places;
        let rho = self.params.rho;
        let active_size = self.active();

        let mut phi: Vec<usize> = self.sorted.iter().take(places).map(|&(_, v)| v).collect();
        if phi.len() < places && !self.held.is_empty() {
            let pool: Vec<usize> = self.held.values().copied().collect();
            let take = (places - phi.len()).min(pool.len());
            phi.extend(index::sample(&mut self.rng, pool.len(), take).into_iter().map(|i| pool[i]));
        }
        phi.sort_by(|&a, &b| tie_break((self.delta[a], a), (self.delta[b], b)));

        let mut candidates: Vec<(PriorityKey, usize)> = self.sorted.iter().take(places + rho).copied().collect();
        candidates.extend(self.held.values().map(|&v| self.entry(v)));
        candidates.sort();
        candidates.truncate(places + rho);

        let settled = phi.iter().filter(|&&v| self.delta[v] == self.oracle[v]).count();
        let h_star = self.delta[*phi.last().unwrap()] - self.delta[phi[0]];
        let bound_useless = self.params.compute_bound.then(|| {
            let relaxed = phi
                .iter()
                .map(|&v| candidates.binary_search(&self.entry(v)).expect("relaxed node among candidates"))
                .collect();
            let input = BoundInput {
                n: self.graph.node_count().max(2),
                p: self.p,
                d: candidates.iter().map(|(k, _)| k.value()).collect(),
                relaxed,
            };
            useless_work_bound(&input, Execution::Sequential).expect("valid bound input").w_upper
        });

        // synchronous relaxation against the distances at phase start
        let mut touched = Vec::new();
        for &v in &phi {
            let dv = self.delta[v];
            for (w, weight) in self.graph.neighbors(v) {
                let candidate = dv + weight;
                if candidate < self.delta[w] && candidate < self.best[w] {
                    if self.best[w] == f64::INFINITY {
                        touched.push(w);
                    }
                    self.best[w] = candidate;
                }
            }
        }
        for &v in &phi {
            self.detach(v);
        }
        touched.sort_unstable();
        for &w in &touched {
            self.detach(w);
            self.delta[w] = self.best[w];
            self.best[w] = f64::INFINITY;
        }

        if rho == 0 {
            for &w in &touched {
                self.move_to_sorted(w);
            }
        } else {
            touched.shuffle(&mut self.rng);
            for &w in &touched {
                let seq = self.next_seq;
                self.next_seq += 1;
                self.status[w] = Status::Held(seq);
                self.held.insert(seq, w);
            }
            while self.held.len() > rho {
                let (_, v) = self.held.pop_first().unwrap();
                self.status[v] = Status::Inactive;
                self.move_to_sorted(v);
            }
            let held_min = self.held.values().map(|&v| self.entry(v)).min();
            if let Some((_, v)) = held_min.filter(|m| self.sorted.first().is_none_or(|s| m < s)) {
                self.move_to_sorted(v);
            }
        }

        let metrics = PhaseMetrics {
            phase: self.phase,
            relaxed: phi.len(),
            settled,
            useless: phi.len() - settled,
            h_star,
            active_size,
            bound_useless,
        };
        self.phase += 1;
        Some(Phase { metrics, relaxed_nodes: phi })
    }
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub phases: Vec<PhaseMetrics>,
    pub distances: Vec<f64>,
}

pub fn simulate(graph: &Graph, source: usize, params: SimParams) -> Result<SimRun> {
    let mut sim = Simulator::new(graph, source, params)?;
    let mut phases = Vec::new();
    while let Some(phase) = sim.step() {
        phases.push(phase.metrics);
    }
    Ok(SimRun { phases, distances: sim.delta })
}

/// One simulation per seed, each on its own graph `G(n, p)` and source.
pub fn simulate_seeds(
    n: usize,
    p: f64,
    places: usize,
    rho: usize,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SimRun>> {
    exec.map(seeds, |&seed| {
        let graph = generate_graph(n, p, seed, Execution::Sequential)?;
        let params = SimParams::new(places, rho, split_seed(seed, 1)).with_edge_probability(p);
        simulate(&graph, source_for_seed(n, seed), params)
    })
    .into_iter()
    .collect()
}

/// Per-phase-index mean over runs; runs shorter than an index are skipped.
pub fn mean_by_phase(runs: &[SimRun]) -> Vec<PhaseMetrics> {
    #[derive(Default)]
    struct Acc {
        count: f64,
        relaxed: f64,
        settled: f64,
        useless: f64,
        h_star: f64,
        active: f64,
        bound: Option<f64>,
    }
    let longest = runs.iter().map(|r| r.phases.len()).max().unwrap_or(0);
    let mut acc: Vec<Acc> = (0..longest).map(|_| Acc::default()).collect();
    for run in runs {
        for (a, m) in acc.iter_mut().zip(&run.phases) {
            a.count += 1.0;
            a.relaxed += m.relaxed as f64;
            a.settled += m.settled as f64;
            a.useless += m.useless as f64;
            a.h_star += m.h_star;
            a.active += m.active_size as f64;
            a.bound = match (a.bound, m.bound_useless) {
                (Some(x), Some(y)) => Some(x + y),
                (None, y) if a.count == 1.0 => y,
                _ => None,
            };
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(phase, a)| PhaseMetrics {
            phase,
            relaxed: (a.relaxed / a.count).round() as usize,
            settled: (a.settled / a.count).round() as usize,
            useless: (a.useless / a.count).round() as usize,
            h_star: a.h_star / a.count,
            active_size: (a.active / a.count).round() as usize,
            bound_useless: a.bound.map(|b| b / a.count),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, p: f64, seed: u64) -> Graph {
        generate_graph(n, p, seed, Execution::Sequential).unwrap()
    }

    #[test]
    fn ties_break_by_id() {
        assert_eq!(tie_break((0.5, 3), (0.5, 7)), Ordering::Less);
        assert_eq!(tie_break((0.5, 7), (0.5, 3)), Ordering::Greater);
        assert_eq!(tie_break((0.4, 9), (0.5, 3)), Ordering::Less);
    }

    #[test]
    fn one_place_no_relaxation_is_dijkstra() {
        let g = graph(300, 0.05, 2);
        let run = simulate(&g, 0, SimParams::new(1, 0, 0)).unwrap();
        let reachable = dijkstra_oracle(&g, 0).iter().filter(|d| d.is_finite()).count();
        assert_eq!(run.phases.len(), reachable);
        assert!(run.phases.iter().all(|m| m.relaxed == 1 && m.settled == 1 && m.useless == 0));
        assert!(run.phases.iter().all(|m| m.bound_useless == Some(0.0)));
    }

    #[test]
    fn all_places_relax_whole_frontier() {
        let g = graph(200, 0.06, 5);
        let run = simulate(&g, 3, SimParams::new(200, 0, 0)).unwrap();
        for m in &run.phases {
            assert_eq!(m.relaxed, m.active_size);
        }
        assert_eq!(run.distances, dijkstra_oracle(&g, 3));
    }

    #[test]
    fn held_out_never_exceeds_rho_nor_hides_minimum() {
        let g = graph(400, 0.1, 9);
        let mut sim = Simulator::new(&g, 0, SimParams::new(4, 16, 1).without_bound()).unwrap();
        while sim.step().is_some() {
            assert!(sim.held_out() <= 16);
            let held_min = sim.held.values().map(|&v| sim.entry(v)).min();
            if let (Some(h), Some(s)) = (held_min, sim.sorted.first()) {
                assert!(h > *s);
            }
            assert!(sim.held.is_empty() || !sim.sorted.is_empty());
        }
    }

    #[test]
    fn deterministic_and_correct_with_relaxation() {
        let g = graph(300, 0.1, 4);
        let a = simulate(&g, 1, SimParams::new(8, 32, 11)).unwrap();
        let b = simulate(&g, 1, SimParams::new(8, 32, 11)).unwrap();
        assert_eq!(a.phases, b.phases);
        assert_eq!(a.distances, dijkstra_oracle(&g, 1));
        assert!(a.phases.len() <= 10 * 300);
    }

    #[test]
    fn mean_skips_short_runs() {
        let m = |phase, relaxed| PhaseMetrics {
            phase,
            relaxed,
            settled: relaxed,
            useless: 0,
            h_star: 0.0,
            active_size: relaxed,
            bound_useless: None,
        };
        let runs = [
            SimRun { phases: vec![m(0, 2), m(1, 4)], distances: vec![] },
            SimRun { phases: vec![m(0, 4)], distances: vec![] },
        ];
        let mean = mean_by_phase(&runs);
        assert_eq!(mean.len(), 2);
        assert_eq!((mean[0].relaxed, mean[1].relaxed), (3, 4));
    }
}
