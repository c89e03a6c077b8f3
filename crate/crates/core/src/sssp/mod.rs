//! Parallel single-source shortest paths on the task scheduler.
//!
//! Each task relaxes one node and is keyed by that node's tentative
//! distance. Distances only decrease, through a CAS loop, so every schedule
//! converges to the same fixed point as sequential Dijkstra.

mod dijkstra;
mod graph;
mod io;
mod parallel;

pub use dijkstra::dijkstra_oracle;
pub use graph::{connectivity_threshold, generate_graph, source_for_seed, Graph, CONNECTIVITY_EPSILON};
pub use io::{read_graph, write_graph};
pub use parallel::{relax_node_task, run_sssp, run_sssp_on, DistanceTable, SsspResult};
