//! Relaxation oracle, sequential audits and concurrent stress runs.
//!
//! A sequential audit drives the places of one backend from a single thread
//! with a random mix of pushes and pops and checks every pop against the
//! set of results the relaxation discipline allows. Item `y` may be ignored
//! by a pop iff fewer than `y.k` live items were pushed after it (counting
//! only pushes by `y`'s place for the hybrid discipline); a result `x` is
//! legal iff every live item with a strictly better key is ignorable.
//!
//! Concurrent runs check exactly-once execution and, optionally, that the
//! other workers drain everything while one worker is frozen.

use std::io::Write;
use std::sync::atomic::{AtomicU8, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::central::CentralKPriority;
use crate::error::{Error, Result};
use crate::exec::split_seed;
use crate::report::write_csv;
use crate::sched::{
    run_with_options, Backend, BackendKind, BackendStats, FreezePlan, Outcome, Place, PlaceId, PriorityKey,
    RunOptions, SchedulerConfig, Spawner, Task, Workload,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discipline {
    /// Each item is hidden by fewer than its own `k` later pushes. Holds for the centralized backend when all items share
    /// one `k`, since its windows then stay aligned.
    Central,
    /// Item `y` with `y.k > 0` is hidden by fewer than `y.k + k_max - 1`
    /// later pushes; `k = 0` items are never hidden. With mixed `k` a narrow push can advance the tail by less than
    /// a wide window, so later pushes may land up to `k_max - 1` slots past
    /// `y`'s own window.
    CentralMixed { k_max: usize },
    /// As `Central`, counting only later pushes by the item's own place.
    Hybrid,
}

impl Discipline {
    /// The discipline a backend is audited against; `None` for work-stealing,
    /// which gives no relaxation guarantee across places.
    pub fn for_backend(kind: BackendKind, ks: &[usize]) -> Option<Self> {
        match kind {
            BackendKind::WorkStealing => None,
            BackendKind::Central if ks.windows(2).all(|w| w[0] == w[1]) => Some(Discipline::Central),
            BackendKind::Central => Some(Discipline::CentralMixed { k_max: ks.iter().copied().max().unwrap_or(1).max(1) }),
            BackendKind::Hybrid => Some(Discipline::Hybrid),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiveItem {
    pub id: u64,
    pub key: f64,
    pub k: usize,
    pub place: usize,
}

fn ignorable_flags(live: &[LiveItem], discipline: Discipline) -> Vec<bool> {
    let mut flags = vec![false; live.len()];
    let mut later_by_place = vec![0usize; live.iter().map(|x| x.place + 1).max().unwrap_or(0)];
    for (i, y) in live.iter().enumerate().rev() {
        let later = live.len() - 1 - i;
        flags[i] = match discipline {
            Discipline::Central => later < y.k,
            Discipline::CentralMixed { k_max } => y.k > 0 && later < y.k + k_max - 1,
            Discipline::Hybrid => later_by_place[y.place] < y.k,
        };
        later_by_place[y.place] += 1;
    }
    flags
}

/// Best key among items that may not be ignored; infinite if all may be.
fn visible_floor(live: &[LiveItem], discipline: Discipline) -> f64 {
    live.iter()
        .zip(ignorable_flags(live, discipline))
        .filter(|(_, ignorable)| !ignorable)
        .map(|(x, _)| x.key)
        .fold(f64::INFINITY, f64::min)
}

/// Ids a pop may return given the live items in push order. A pop may
/// return nothing iff every live item is ignorable.
pub fn legal_set_oracle(live: &[LiveItem], discipline: Discipline) -> Vec<u64> {
    let floor = visible_floor(live, discipline);
    live.iter().filter(|x| x.key <= floor).map(|x| x.id).collect()
}

/// Whether a pop may come back empty.
pub fn empty_pop_legal(live: &[LiveItem], discipline: Discipline) -> bool {
    visible_floor(live, discipline).is_infinite()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Push,
    Pop,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub ts: u64,
    pub op: Op,
    pub place: usize,
    pub task: Option<u64>,
    pub key: Option<f64>,
    pub k: Option<usize>,
    pub result: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub ops: usize,
    pub places: usize,
    /// Relaxation values drawn uniformly per push.
    pub ks: Vec<usize>,
    pub seed: u64,
    pub push_probability: f64,
    /// Keys are integers in `0..key_range`, so ties occur.
    pub key_range: u32,
}

impl AuditConfig {
    pub fn new(ops: usize, places: usize, ks: Vec<usize>, seed: u64) -> Self {
        AuditConfig { ops, places, ks, seed, push_probability: 0.55, key_range: 1000 }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        let k_max = self.ks.iter().copied().max().unwrap_or(1).max(1);
        SchedulerConfig::new(self.places).with_k_max(k_max).with_k(k_max).with_seed(self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub message: String,
    /// Every event up to and including the offending pop.
    pub trace: Vec<TraceEvent>,
}

impl Counterexample {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.trace)
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub pushes: u64,
    pub pops: u64,
    pub empty_pops: u64,
    pub counterexample: Option<Counterexample>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Audits caller-built places; see the module docs for the rule checked.
pub fn audit_places<P: Place>(places: &mut [P], discipline: Discipline, config: &AuditConfig) -> AuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut live: Vec<LiveItem> = Vec::new();
    let mut trace = Vec::with_capacity(config.ops);
    let mut report = AuditReport { pushes: 0, pops: 0, empty_pops: 0, counterexample: None };
    let mut next_id = 0u64;

    for ts in 0..config.ops as u64 {
        let place = rng.gen_range(0..places.len());
        if rng.gen_bool(config.push_probability) {
            let key = rng.gen_range(0..config.key_range) as f64;
            let k = config.ks[rng.gen_range(0..config.ks.len())];
            let id = next_id;
            next_id += 1;
            places[place].push(Task::new(key, k, id));
            live.push(LiveItem { id, key, k, place });
            trace.push(TraceEvent { ts, op: Op::Push, place, task: Some(id), key: Some(key), k: Some(k), result: None });
            report.pushes += 1;
            continue;
        }

        let floor = visible_floor(&live, discipline);
        let got = places[place].pop();
        trace.push(TraceEvent { ts, op: Op::Pop, place, task: None, key: None, k: None, result: got.map(|t| t.payload) });
        let problem = match got {
            None => {
                report.empty_pops += 1;
                floor.is_finite().then(|| format!("empty pop while an item with key {floor} may not be ignored"))
            }
            Some(task) => {
                report.pops += 1;
                match live.iter().position(|x| x.id == task.payload) {
                    None => Some(format!("task {} returned but not live", task.payload)),
                    Some(i) if live[i].key > floor => Some(format!(
                        "task {} (key {}) returned while an item with key {floor} may not be ignored",
                        task.payload, live[i].key
                    )),
                    Some(i) => {
                        live.remove(i);
                        None
                    }
                }
            }
        };
        if let Some(message) = problem {
            report.counterexample = Some(Counterexample { message, trace });
            return report;
        }
    }
    report
}

/// Sequential audit of a fresh backend against `discipline`.
pub fn sequential_audit(kind: BackendKind, discipline: Discipline, config: &AuditConfig) -> Result<AuditReport> {
    let sched = config.scheduler_config();
    sched.validate()?;
    if config.ks.is_empty() {
        return Err(Error::config("at least one k value is required"));
    }
    Ok(crate::with_backend!(kind, B => {
        let mut places = B::places(&sched);
        audit_places(&mut places, discipline, config)
    }))
}

/// Audits a centralized backend whose insertion window is `slack` slots too
/// wide. Used to check that the audit catches such a bug.
pub fn mutant_central_audit(slack: usize, discipline: Discipline, config: &AuditConfig) -> Result<AuditReport> {
    let sched = config.scheduler_config();
    sched.validate()?;
    let mut places = CentralKPriority::places_with_window_slack(&sched, slack);
    Ok(audit_places(&mut places, discipline, config))
}

struct TreeWorkload {
    tasks: u64,
    k: usize,
    seed: u64,
    runs: Vec<AtomicU8>,
}

impl TreeWorkload {
    fn key(&self, id: u64) -> PriorityKey {
        PriorityKey::new((split_seed(self.seed, id) >> 11) as f64 / (1u64 << 53) as f64)
    }

    fn k(&self, id: u64) -> usize {
        1 + (split_seed(!self.seed, id) % self.k as u64) as usize
    }
}

impl Workload for TreeWorkload {
    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome {
        let id = task.payload;
        self.runs[id as usize].fetch_add(1, Ordering::Relaxed);
        for child in [2 * id + 1, 2 * id + 2] {
            if child < self.tasks {
                spawner.spawn_with_k(self.key(child), self.k(child), child);
            }
        }
        Outcome::Executed
    }
}

#[derive(Clone, Debug)]
pub struct StressConfig {
    pub places: usize,
    pub tasks: u64,
    /// Per-task k is drawn from `1..=k`.
    pub k: usize,
    pub seed: u64,
    pub freeze: Option<FreezePlan>,
    pub timeout: Duration,
}

impl StressConfig {
    pub fn new(places: usize, tasks: u64, k: usize, seed: u64) -> Self {
        StressConfig { places, tasks, k, seed, freeze: None, timeout: Duration::from_secs(120) }
    }
}

#[derive(Clone, Debug)]
pub struct StressReport {
    pub executed: u64,
    pub duplicates: u64,
    pub losses: u64,
    pub elapsed: Duration,
    pub stats: BackendStats,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.duplicates == 0 && self.losses == 0
    }
}

/// Runs a binary tree of `tasks` tasks and counts how often each ran.
pub fn concurrent_stress(kind: BackendKind, config: &StressConfig) -> Result<StressReport> {
    if config.places < 2 {
        return Err(Error::config("stress runs need at least two places"));
    }
    if config.tasks == 0 || config.k == 0 {
        return Err(Error::config("stress runs need tasks >= 1 and k >= 1"));
    }
    let workload = TreeWorkload {
        tasks: config.tasks,
        k: config.k,
        seed: config.seed,
        runs: (0..config.tasks).map(|_| AtomicU8::new(0)).collect(),
    };
    let sched = SchedulerConfig::new(config.places).with_k_max(config.k).with_k(config.k).with_seed(config.seed);
    let options = RunOptions { timeout: config.timeout, freeze: config.freeze };
    let root = Task { key: workload.key(0), k: workload.k(0), payload: 0 };
    let start = Instant::now();
    let stats = crate::with_backend!(kind, B => run_with_options::<B, _>(&workload, root, &sched, options))?;
    let elapsed = start.elapsed();
    let mut report = StressReport { executed: 0, duplicates: 0, losses: 0, elapsed, stats };
    for r in &workload.runs {
        match r.load(Ordering::Relaxed) {
            0 => report.losses += 1,
            1 => report.executed += 1,
            n => {
                report.executed += 1;
                report.duplicates += n as u64 - 1;
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct FrozenReport {
    pub baseline: Duration,
    pub budget: Duration,
    pub freeze: FreezePlan,
    /// `Err` carries the liveness failure, e.g. a timeout.
    pub outcome: std::result::Result<StressReport, String>,
}

impl FrozenReport {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.passed() && r.elapsed <= self.budget)
    }
}

/// Freezes a random worker at a random point and requires the rest to
/// drain the workload within `factor` times the unfrozen run time.
pub fn frozen_worker_check(kind: BackendKind, config: &StressConfig, baseline: Duration, factor: u32) -> FrozenReport {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 0xF4EE2E));
    let per_worker = (config.tasks / config.places as u64).max(2);
    let freeze = FreezePlan { place: PlaceId(rng.gen_range(0..config.places)), after_tasks: rng.gen_range(1..per_worker) };
    let budget = baseline * factor;
    let frozen = StressConfig { freeze: Some(freeze), timeout: budget, ..config.clone() };
    let outcome = concurrent_stress(kind, &frozen).map_err(|e| e.to_string());
    FrozenReport { baseline, budget, freeze, outcome }
}
