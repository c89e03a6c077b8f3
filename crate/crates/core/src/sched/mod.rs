//! Task model, the owner-bound backend interface, and the worker pool.

mod driver;

use std::cmp::Ordering;
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use rand::rngs::SmallRng;
use rand::SeedableRng;

use crate::error::{Error, Result};

pub use driver::{run_on_places, run_to_quiescence, run_with_options, FreezePlan, Outcome, RunOptions, Spawner, Workload};

/// Upper bound for `k_max`; the centralized global array uses segments of
/// this many slots and needs a k-window to span at most two of them.
pub const MAX_K: usize = 4096;

/// Priority of a task. Lower values run first.
///
/// Ordering is `f64::total_cmp`, so every key (including infinities) is
/// comparable. NaN keys are rejected at construction.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PriorityKey(f64);

impl PriorityKey {
    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "priority key must not be NaN");
        PriorityKey(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub(crate) fn to_bits(self) -> u64 {
        self.0.to_bits()
    }

    pub(crate) fn from_bits(bits: u64) -> Self {
        PriorityKey(f64::from_bits(bits))
    }
}

impl Eq for PriorityKey {}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<f64> for PriorityKey {
    fn from(v: f64) -> Self {
        PriorityKey::new(v)
    }
}

/// A schedulable unit: priority key, relaxation bound and an opaque payload.
///
/// Liveness is not stored on the task; the [`Workload`] that executes tasks
/// decides whether a popped task is still worth running.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    pub key: PriorityKey,
    pub k: usize,
    pub payload: u64,
}

impl Task {
    pub fn new(key: impl Into<PriorityKey>, k: usize, payload: u64) -> Self {
        Task { key: key.into(), k, payload }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlaceId(pub usize);

impl PlaceId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "place{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedulerConfig {
    pub places: usize,
    pub k_default: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl SchedulerConfig {
    pub const DEFAULT_K_MAX: usize = 512;

    pub fn new(places: usize) -> Self {
        SchedulerConfig { places, k_default: Self::DEFAULT_K_MAX, k_max: Self::DEFAULT_K_MAX, seed: 0 }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k_default = k;
        if k > self.k_max {
            self.k_max = k;
        }
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.places == 0 {
            return Err(Error::config("at least one place is required"));
        }
        if self.k_max == 0 || self.k_max > MAX_K {
            return Err(Error::config(format!("k_max must be in 1..={MAX_K}, got {}", self.k_max)));
        }
        if self.k_default > self.k_max {
            return Err(Error::config(format!(
                "k_default {} exceeds k_max {}",
                self.k_default, self.k_max
            )));
        }
        Ok(())
    }

    /// Per-place generator, reproducible for a given seed.
    pub(crate) fn place_rng(&self, place: usize) -> SmallRng {
        SmallRng::seed_from_u64(crate::exec::split_seed(self.seed, place as u64))
    }
}

/// Counters collected by the worker pool and the backends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BackendStats {
    pub pushes: u64,
    /// Tasks popped and executed live.
    pub pops: u64,
    /// Pops that returned nothing while work was still in flight.
    pub spurious_failures: u64,
    pub steals_or_spies: u64,
    pub dead_tasks_eliminated: u64,
}

impl BackendStats {
    pub fn consumed(&self) -> u64 {
        self.pops + self.dead_tasks_eliminated
    }
}

impl AddAssign for BackendStats {
    fn add_assign(&mut self, o: Self) {
        self.pushes += o.pushes;
        self.pops += o.pops;
        self.spurious_failures += o.spurious_failures;
        self.steals_or_spies += o.steals_or_spies;
        self.dead_tasks_eliminated += o.dead_tasks_eliminated;
    }
}

/// One worker's handle into a backend.
///
/// A place is created once per worker by [`Backend::places`] and is not
/// `Clone`; holding `&mut` to it is what makes push/pop owner-only.
pub trait Place: Send {
    fn id(&self) -> PlaceId;

    fn push(&mut self, task: Task);

    /// Returns some stored task, or `None` if the structure looked empty to
    /// this place. `None` may be spurious while other places make progress.
    fn pop(&mut self) -> Option<Task>;

    /// Successful steals (work-stealing) or spies (hybrid) so far.
    fn steals_or_spies(&self) -> u64 {
        0
    }
}

pub trait Backend {
    type Place: Place + 'static;

    const KIND: BackendKind;

    /// Builds a fresh structure and returns one handle per place, in place order.
    fn places(config: &SchedulerConfig) -> Vec<Self::Place>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackendKind {
    WorkStealing,
    Central,
    Hybrid,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [BackendKind::WorkStealing, BackendKind::Central, BackendKind::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::WorkStealing => "ws",
            BackendKind::Central => "central",
            BackendKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws" | "work-stealing" => Ok(BackendKind::WorkStealing),
            "central" | "central-k" => Ok(BackendKind::Central),
            "hybrid" | "hybrid-k" => Ok(BackendKind::Hybrid),
            other => Err(Error::config(format!("unknown backend `{other}` (expected ws, central or hybrid)"))),
        }
    }
}

/// Expands `$body` once with `$B` bound to the backend type for `$kind`.
#[macro_export]
macro_rules! with_backend {
    ($kind:expr, $B:ident => $body:expr) => {
        match $kind {
            $crate::BackendKind::WorkStealing => {
                type $B = $crate::ws::WorkStealing;
                $body
            }
            $crate::BackendKind::Central => {
                type $B = $crate::central::CentralKPriority;
                $body
            }
            $crate::BackendKind::Hybrid => {
                type $B = $crate::hybrid::HybridKPriority;
                $body
            }
        }
    };
}
