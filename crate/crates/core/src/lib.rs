//! Priority task scheduling over relaxed concurrent priority structures.
//!
//! Three interchangeable backends share one owner-bound push/pop interface:
//!
//! * [`ws::WorkStealing`]: per-place priority queues with steal-half.
//! * [`central::CentralKPriority`]: a segmented global array with randomized
//!   k-window insertion and per-place queues of item references.
//! * [`hybrid::HybridKPriority`]: per-place local lists published to a global
//!   list at most every k pushes, with read-only spying.
//!
//! A worker pool ([`sched::run_to_quiescence`]) drives any backend until no
//! task is left. The [`sssp`] module builds a parallel Dijkstra on top of it,
//! [`sim`] replays the same algorithm in a deterministic phase model, and
//! [`theory`] evaluates the useless-work bound those phases are checked
//! against. [`audit`] holds the relaxation oracle and the stress harness.

pub mod audit;
pub mod central;
mod error;
pub mod exec;
pub mod hybrid;
pub mod report;
pub mod sched;
pub mod sim;
pub mod sssp;
pub mod theory;
pub mod ws;

pub use error::{Error, Result};
pub use exec::Execution;
pub use sched::{
    run_to_quiescence, Backend, BackendKind, BackendStats, Outcome, Place, PlaceId, PriorityKey,
    RunOptions, SchedulerConfig, Spawner, Task, Workload,
};
