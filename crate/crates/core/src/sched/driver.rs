use std::hint;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use super::{Backend, BackendStats, Place, PlaceId, PriorityKey, SchedulerConfig, Task};
use crate::error::{Error, Result};

const SPIN_LIMIT: u32 = 32;
const CLOCK_CHECK_INTERVAL: u32 = 256;

/// What executing a popped task amounted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Executed,
    /// The task turned out to be stale and did no work.
    Dead,
}

/// Application side of a run: executes tasks and may spawn new ones.
pub trait Workload: Sync {
    /// Lazy dead-task check applied to every popped task before execution.
    /// Must be monotone: once false for a task, false forever.
    fn is_live(&self, _task: &Task) -> bool {
        true
    }

    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome;
}

/// Spawn handle given to an executing task; pushes go to the executing place.
pub struct Spawner<'a, P: Place> {
    place: &'a mut P,
    in_flight: &'a AtomicUsize,
    pushes: &'a mut u64,
    k_default: usize,
    k_max: usize,
}

impl<P: Place> Spawner<'_, P> {
    pub fn place(&self) -> PlaceId {
        self.place.id()
    }

    pub fn spawn(&mut self, key: PriorityKey, payload: u64) {
        self.spawn_with_k(key, self.k_default, payload);
    }

    pub fn spawn_with_k(&mut self, key: PriorityKey, k: usize, payload: u64) {
        debug_assert!(k <= self.k_max, "k={k} above k_max={}", self.k_max);
        // counted before the push so quiescence can never be observed early
        self.in_flight.fetch_add(1, Ordering::AcqRel);
        *self.pushes += 1;
        self.place.push(Task { key, k: k.min(self.k_max), payload });
    }
}

/// Suspends one worker once it has consumed `after_tasks` tasks. The frozen
/// worker holds no task while suspended and resumes only after the run ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreezePlan {
    pub place: PlaceId,
    pub after_tasks: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Wall-clock budget after which the run is abandoned with [`Error::Timeout`].
    pub timeout: Duration,
    pub freeze: Option<FreezePlan>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timeout: Duration::from_secs(120), freeze: None }
    }
}

/// Runs `root` and everything it transitively spawns on a fresh `B`.
pub fn run_to_quiescence<B: Backend, W: Workload>(
    workload: &W,
    root: Task,
    config: &SchedulerConfig,
) -> Result<BackendStats> {
    run_with_options::<B, W>(workload, root, config, RunOptions::default())
}

pub fn run_with_options<B: Backend, W: Workload>(
    workload: &W,
    root: Task,
    config: &SchedulerConfig,
    options: RunOptions,
) -> Result<BackendStats> {
    config.validate()?;
    let mut places = B::places(config);
    run_on_places(&mut places, workload, root, config, options)
}

/// Drives caller-owned places, leaving them inspectable after the run.
pub fn run_on_places<P: Place, W: Workload>(
    places: &mut [P],
    workload: &W,
    root: Task,
    config: &SchedulerConfig,
    options: RunOptions,
) -> Result<BackendStats> {
    config.validate()?;
    if places.is_empty() {
        return Err(Error::config("no places to run on"));
    }
    let in_flight = AtomicUsize::new(1);
    let abort = AtomicBool::new(false);
    let deadline = Instant::now() + options.timeout;

    places[0].push(Task { k: root.k.min(config.k_max), ..root });

    let per_worker: Vec<BackendStats> = thread::scope(|s| {
        let handles: Vec<_> = places
            .iter_mut()
            .map(|place| {
                let worker = Worker {
                    workload,
                    in_flight: &in_flight,
                    abort: &abort,
                    deadline,
                    freeze_after: options
                        .freeze
                        .filter(|f| f.place == place.id())
                        .map(|f| f.after_tasks),
                    k_default: config.k_default,
                    k_max: config.k_max,
                };
                s.spawn(move || worker.run(place))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut stats = BackendStats::default();
    for w in per_worker {
        stats += w;
    }
    stats.pushes += 1; // root
    stats.steals_or_spies = places.iter().map(|p| p.steals_or_spies()).sum();

    if abort.load(Ordering::Acquire) {
        return Err(Error::Timeout { budget: options.timeout, stats });
    }
    debug_assert_eq!(stats.pushes, stats.consumed());
    Ok(stats)
}

struct Worker<'a, W> {
    workload: &'a W,
    in_flight: &'a AtomicUsize,
    abort: &'a AtomicBool,
    deadline: Instant,
    freeze_after: Option<u64>,
    k_default: usize,
    k_max: usize,
}

impl<W: Workload> Worker<'_, W> {
    fn run<P: Place>(&self, place: &mut P) -> BackendStats {
        let mut stats = BackendStats::default();
        let mut idle: u32 = 0;
        let mut ticks: u32 = 0;
        loop {
            if self.freeze_after.is_some_and(|n| stats.consumed() >= n) {
                self.frozen();
                return stats;
            }
            ticks = ticks.wrapping_add(1);
            if ticks.is_multiple_of(CLOCK_CHECK_INTERVAL) && self.check_deadline() {
                return stats;
            }
            match place.pop() {
                Some(task) => {
                    idle = 0;
                    let outcome = if self.workload.is_live(&task) {
                        let mut spawner = Spawner {
                            place: &mut *place,
                            in_flight: self.in_flight,
                            pushes: &mut stats.pushes,
                            k_default: self.k_default,
                            k_max: self.k_max,
                        };
                        self.workload.execute(task, &mut spawner)
                    } else {
                        Outcome::Dead
                    };
                    match outcome {
                        Outcome::Executed => stats.pops += 1,
                        Outcome::Dead => stats.dead_tasks_eliminated += 1,
                    }
                    self.in_flight.fetch_sub(1, Ordering::AcqRel);
                }
                None => {
                    if self.in_flight.load(Ordering::Acquire) == 0 || self.abort.load(Ordering::Relaxed) {
                        return stats;
                    }
                    stats.spurious_failures += 1;
                    idle += 1;
                    if idle < SPIN_LIMIT {
                        hint::spin_loop();
                    } else {
                        thread::yield_now();
                    }
                }
            }
        }
    }

    fn check_deadline(&self) -> bool {
        if self.abort.load(Ordering::Relaxed) {
            return true;
        }
        if Instant::now() >= self.deadline {
            self.abort.store(true, Ordering::Release);
            return true;
        }
        false
    }

    fn frozen(&self) {
        while self.in_flight.load(Ordering::Acquire) != 0 && !self.check_deadline() {
            thread::sleep(Duration::from_micros(200));
        }
    }
}
