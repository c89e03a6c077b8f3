use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::Graph;
use crate::sched::PriorityKey;

/// Sequential Dijkstra with lazy deletion. Unreachable nodes stay at infinity.
pub fn dijkstra_oracle(graph: &Graph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut settled = vec![false; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((PriorityKey::new(0.0), source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for (v, w) in graph.neighbors(u) {
            let nd = d.value() + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((PriorityKey::new(nd), v)));
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(dijkstra_oracle(&g, 0), vec![0.0]);
    }

    #[test]
    fn path() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.4)]).unwrap();
        assert_eq!(dijkstra_oracle(&g, 0), vec![0.0, 0.5, 0.5 + 0.4]);
    }

    #[test]
    fn unreachable_is_infinite() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5)]).unwrap();
        assert_eq!(dijkstra_oracle(&g, 1), vec![0.5, 0.0, f64::INFINITY]);
    }
}
