use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::Graph;
use crate::error::Result;
use crate::sched::{
    run_with_options, Backend, BackendKind, BackendStats, Outcome, Place, PriorityKey, RunOptions,
    SchedulerConfig, Spawner, Task, Workload,
};

/// Tentative distances, one atomic cell per node holding `f64` bits.
pub struct DistanceTable {
    cells: Vec<AtomicU64>,
}

impl DistanceTable {
    pub fn new(n: usize, source: usize) -> Self {
        let cells: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(f64::INFINITY.to_bits())).collect();
        cells[source].store(0f64.to_bits(), Ordering::Relaxed);
        DistanceTable { cells }
    }

    pub fn get(&self, node: usize) -> f64 {
        f64::from_bits(self.cells[node].load(Ordering::Acquire))
    }

    /// Lowers `node` to `candidate` unless it is already at least as short.
    /// Returns whether this call performed the improvement.
    pub fn improve(&self, node: usize, candidate: f64) -> bool {
        let cell = &self.cells[node];
        let mut current = cell.load(Ordering::Acquire);
        while candidate < f64::from_bits(current) {
            match cell.compare_exchange_weak(current, candidate.to_bits(), Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return true,
                Err(seen) => current = seen,
            }
        }
        false
    }

    pub fn snapshot(&self) -> Vec<f64> {
        (0..self.cells.len()).map(|i| self.get(i)).collect()
    }
}

/// Relaxes `node` as scheduled with key `distance`: a stale key is dead,
/// otherwise every neighbour improved by this call is handed to `spawn`.
pub fn relax_node_task(
    graph: &Graph,
    dist: &DistanceTable,
    node: usize,
    distance: f64,
    mut spawn: impl FnMut(f64, usize),
) -> Outcome {
    if dist.get(node) != distance {
        return Outcome::Dead;
    }
    for (target, weight) in graph.neighbors(node) {
        let candidate = distance + weight;
        if dist.improve(target, candidate) {
            spawn(candidate, target);
        }
    }
    Outcome::Executed
}

struct Sssp<'g> {
    graph: &'g Graph,
    dist: DistanceTable,
}

impl Workload for Sssp<'_> {
    fn is_live(&self, task: &Task) -> bool {
        self.dist.get(task.payload as usize) == task.key.value()
    }

    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome {
        relax_node_task(self.graph, &self.dist, task.payload as usize, task.key.value(), |d, v| {
            spawner.spawn(PriorityKey::new(d), v as u64)
        })
    }
}

#[derive(Clone, Debug)]
pub struct SsspResult {
    pub distances: Vec<f64>,
    /// Live node relaxations executed.
    pub relaxations: u64,
    /// Stale tasks skipped, by the pop-time check or inside the task.
    pub dead_tasks: u64,
    pub wall_time: Duration,
    pub stats: BackendStats,
}

impl SsspResult {
    pub fn reachable(&self) -> usize {
        self.distances.iter().filter(|d| d.is_finite()).count()
    }
}

/// Parallel SSSP from `source` on a fresh backend of type `B`.
pub fn run_sssp_on<B: Backend>(
    graph: &Graph,
    source: usize,
    config: &SchedulerConfig,
    options: RunOptions,
) -> Result<SsspResult> {
    let workload = Sssp { graph, dist: DistanceTable::new(graph.node_count(), source) };
    let root = Task::new(0.0, config.k_default, source as u64);
    let start = Instant::now();
    let stats = run_with_options::<B, _>(&workload, root, config, options)?;
    let wall_time = start.elapsed();
    Ok(SsspResult {
        distances: workload.dist.snapshot(),
        relaxations: stats.pops,
        dead_tasks: stats.dead_tasks_eliminated,
        wall_time,
        stats,
    })
}

pub fn run_sssp(
    graph: &Graph,
    source: usize,
    backend: BackendKind,
    config: &SchedulerConfig,
    options: RunOptions,
) -> Result<SsspResult> {
    crate::with_backend!(backend, B => run_sssp_on::<B>(graph, source, config, options))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_task_is_dead() {
        let g = Graph::from_edges(2, &[(0, 1, 0.5)]).unwrap();
        let dist = DistanceTable::new(2, 0);
        let mut spawned = 0;
        assert_eq!(relax_node_task(&g, &dist, 0, 0.25, |_, _| spawned += 1), Outcome::Dead);
        assert_eq!(spawned, 0);
    }

    #[test]
    fn star_center_spawns_every_leaf() {
        let edges: Vec<_> = (1..6).map(|v| (0, v, 0.1 * v as f64)).collect();
        let g = Graph::from_edges(6, &edges).unwrap();
        let dist = DistanceTable::new(6, 0);
        let mut spawned = Vec::new();
        assert_eq!(relax_node_task(&g, &dist, 0, 0.0, |d, v| spawned.push((v, d))), Outcome::Executed);
        spawned.sort_by_key(|&(v, _)| v);
        assert_eq!(spawned, (1..6).map(|v| (v as usize, 0.1 * v as f64)).collect::<Vec<_>>());
    }

    #[test]
    fn improve_only_lowers() {
        let dist = DistanceTable::new(2, 0);
        assert!(dist.improve(1, 0.7));
        assert!(!dist.improve(1, 0.7));
        assert!(!dist.improve(1, 0.9));
        assert!(dist.improve(1, 0.3));
        assert!(!dist.improve(0, 0.1));
        assert_eq!(dist.snapshot(), vec![0.0, 0.3]);
    }

    #[test]
    fn triangle_on_every_backend() {
        let g = Graph::from_edges(3, &[(0, 1, 0.2), (0, 2, 0.3), (1, 2, 0.9)]).unwrap();
        for kind in BackendKind::ALL {
            let config = SchedulerConfig::new(2).with_k(4);
            let r = run_sssp(&g, 0, kind, &config, RunOptions::default()).unwrap();
            assert_eq!(r.distances, vec![0.0, 0.2, 0.3], "{kind}");
        }
    }
}
