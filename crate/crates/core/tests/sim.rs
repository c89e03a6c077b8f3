use kprio::exec::Execution;
use kprio::sim::{mean_by_phase, simulate, simulate_seeds, SimParams, Simulator};
use kprio::sssp::{generate_graph, source_for_seed, Graph};
use proptest::prelude::*;

/// Bellman-Ford, kept separate from the crate's Dijkstra oracle.
fn shortest(graph: &Graph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    dist[source] = 0.0;
    loop {
        let mut changed = false;
        for (u, v, w) in graph.edges() {
            for (a, b) in [(u, v), (v, u)] {
                if dist[a] + w < dist[b] {
                    dist[b] = dist[a] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phases_are_consistent_with_an_independent_oracle(
        n in 20usize..120, places in 1usize..40, rho in 0usize..60, seed in any::<u64>(),
    ) {
        let graph = generate_graph(n, 0.3, seed, Execution::Sequential).unwrap();
        let source = source_for_seed(n, seed);
        let exact = shortest(&graph, source);
        let mut sim = Simulator::new(&graph, source, SimParams::new(places, rho, seed).without_bound()).unwrap();
        let mut phases = 0;
        loop {
            let before = sim.distances().to_vec();
            let Some(phase) = sim.step() else { break };
            phases += 1;
            let m = &phase.metrics;
            prop_assert_eq!(m.relaxed, phase.relaxed_nodes.len());
            prop_assert_eq!(m.relaxed, places.min(m.active_size));
            let settled = phase.relaxed_nodes.iter().filter(|&&v| before[v] == exact[v]).count();
            prop_assert_eq!(m.settled, settled);
            prop_assert_eq!(m.settled + m.useless, m.relaxed);
            prop_assert!(m.h_star >= 0.0);
            prop_assert!(sim.held_out() <= rho);
            prop_assert!(phases <= 10 * n, "no termination after {} phases", phases);
        }
        prop_assert_eq!(sim.distances(), exact.as_slice());
    }
}

#[test]
fn one_place_without_relaxation_is_dijkstra() {
    let graph = generate_graph(300, 0.1, 1, Execution::Sequential).unwrap();
    let run = simulate(&graph, 0, SimParams::new(1, 0, 0)).unwrap();
    assert_eq!(run.phases.len(), 300);
    assert!(run.phases.iter().all(|m| m.relaxed == 1 && m.settled == 1));
    assert!(run.phases.iter().all(|m| m.bound_useless == Some(0.0)));
}

#[test]
fn as_many_places_as_nodes_relaxes_the_whole_frontier() {
    let graph = generate_graph(100, 0.1, 2, Execution::Sequential).unwrap();
    let run = simulate(&graph, 0, SimParams::new(100, 0, 0).without_bound()).unwrap();
    assert!(run.phases.iter().all(|m| m.relaxed == m.active_size));
    assert_eq!(run.phases[0].relaxed, 1);
}

#[test]
fn runs_are_reproducible() {
    let graph = generate_graph(400, 0.2, 3, Execution::Sequential).unwrap();
    let params = SimParams::new(16, 32, 7);
    let a = simulate(&graph, 5, params.clone()).unwrap();
    let b = simulate(&graph, 5, params).unwrap();
    assert_eq!(a.phases, b.phases);
    let seeds = [1, 2, 3];
    let seq = simulate_seeds(200, 0.2, 8, 16, &seeds, Execution::Sequential).unwrap();
    let par = simulate_seeds(200, 0.2, 8, 16, &seeds, Execution::Parallel).unwrap();
    assert!(seq.iter().zip(&par).all(|(x, y)| x.phases == y.phases && x.distances == y.distances));
}

#[test]
fn relaxation_only_adds_phases_or_useless_work() {
    let graph = generate_graph(500, 0.2, 4, Execution::Sequential).unwrap();
    let useless = |rho| -> usize {
        let run = simulate(&graph, 0, SimParams::new(8, rho, 1).without_bound()).unwrap();
        run.phases.iter().map(|m| m.useless).sum()
    };
    assert!(useless(0) <= useless(64));
}

#[test]
fn rejects_bad_parameters() {
    let graph = Graph::from_edges(3, &[(0, 1, 0.5)]).unwrap();
    assert!(Simulator::new(&graph, 0, SimParams::new(0, 0, 0)).is_err());
    assert!(Simulator::new(&graph, 3, SimParams::new(1, 0, 0)).is_err());
}

#[test]
fn phase_means_skip_finished_runs() {
    let runs = simulate_seeds(100, 0.2, 4, 0, &[1, 2, 3, 4], Execution::Parallel).unwrap();
    let means = mean_by_phase(&runs);
    let longest = runs.iter().map(|r| r.phases.len()).max().unwrap();
    assert_eq!(means.len(), longest);
    let last: Vec<_> = runs.iter().filter_map(|r| r.phases.get(longest - 1)).collect();
    assert_eq!(means[longest - 1].relaxed, last.iter().map(|m| m.relaxed).sum::<usize>() / last.len());
}

#[test]
fn bound_covers_observed_useless_work_on_small_graphs() {
    // the front is 1/25 of the graph, as in the large-scale comparison
    let seeds: Vec<u64> = (0..4000).collect();
    let runs = simulate_seeds(50, 0.3, 2, 0, &seeds, Execution::Parallel).unwrap();
    let phases: Vec<_> = runs.iter().flat_map(|r| &r.phases).collect();
    assert!(phases.len() >= 100_000);
    let covered = phases.iter().filter(|m| m.bound_useless.unwrap() + 1e-9 >= m.useless as f64).count();
    let fraction = covered as f64 / phases.len() as f64;
    assert!(fraction >= 0.99, "bound covers {fraction:.4} of {} phases", phases.len());
}
