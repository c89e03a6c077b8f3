use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use kprio::central::CentralKPriority;
use kprio::hybrid::HybridKPriority;
use kprio::sched::{run_on_places, run_with_options, FreezePlan};
use kprio::ws::WorkStealing;
use kprio::{
    with_backend, Backend, BackendKind, Error, Outcome, Place, PlaceId, RunOptions, SchedulerConfig, Spawner, Task,
    Workload,
};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Op {
    Push { place: usize, key: u8, k: usize },
    Pop { place: usize },
}

fn ops(places: usize) -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        3 => (0..places, any::<u8>(), 0usize..20).prop_map(|(place, key, k)| Op::Push { place, key, k }),
        2 => (0..places).prop_map(|place| Op::Pop { place }),
    ];
    proptest::collection::vec(op, 0..300)
}

/// Replays `ops`, then drains every place; returns payload -> times popped.
fn replay<B: Backend>(places: usize, ops: &[Op]) -> (u64, HashMap<u64, u32>) {
    let config = SchedulerConfig::new(places).with_k_max(32).with_k(32).with_seed(5);
    let mut ps = B::places(&config);
    let mut popped: HashMap<u64, u32> = HashMap::new();
    let mut next = 0u64;
    for op in ops {
        match *op {
            Op::Push { place, key, k } => {
                ps[place].push(Task::new(key as f64, k, next));
                next += 1;
            }
            Op::Pop { place } => {
                if let Some(t) = ps[place].pop() {
                    *popped.entry(t.payload).or_default() += 1;
                }
            }
        }
    }
    // every item is reachable by its creator (or whoever stole it)
    for p in ps.iter_mut() {
        while let Some(t) = p.pop() {
            *popped.entry(t.payload).or_default() += 1;
        }
    }
    (next, popped)
}

proptest! {
    #[test]
    fn sequential_ops_pop_each_item_once(ops in ops(3)) {
        for kind in BackendKind::ALL {
            let (pushed, popped) = with_backend!(kind, B => replay::<B>(3, &ops));
            prop_assert_eq!(popped.len() as u64, pushed, "{} lost items", kind);
            prop_assert!(popped.values().all(|&c| c == 1), "{} duplicated items", kind);
        }
    }

    #[test]
    fn single_place_is_a_strict_priority_queue(keys in proptest::collection::vec(0u16..500, 1..200), k in 0usize..64) {
        for kind in BackendKind::ALL {
            let config = SchedulerConfig::new(1).with_k_max(64).with_k(64);
            let got: Vec<u16> = with_backend!(kind, B => {
                let mut ps = B::places(&config);
                for (i, &key) in keys.iter().enumerate() {
                    ps[0].push(Task::new(key as f64, k, i as u64));
                }
                std::iter::from_fn(|| ps[0].pop()).map(|t| t.key.value() as u16).collect()
            });
            let mut expected = keys.clone();
            expected.sort_unstable();
            prop_assert_eq!(got, expected, "{}", kind);
        }
    }
}

/// Every task respawns itself forever.
struct Forever;

impl Workload for Forever {
    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome {
        spawner.spawn(task.key, task.payload);
        Outcome::Executed
    }
}

#[test]
fn endless_work_times_out() {
    for kind in BackendKind::ALL {
        let options = RunOptions { timeout: Duration::from_millis(200), freeze: None };
        let config = SchedulerConfig::new(2).with_k(4);
        let result = with_backend!(kind, B => run_with_options::<B, _>(&Forever, Task::new(0.0, 4, 0), &config, options));
        match result {
            Err(Error::Timeout { stats, .. }) => assert!(stats.pops > 0, "{kind}"),
            other => panic!("{kind}: expected a timeout, got {other:?}"),
        }
    }
}

/// A caterpillar: task n > 0 spawns n - 1 and a leaf, so payload n yields 2n + 1 tasks.
struct Chain {
    executed: AtomicU64,
}

impl Workload for Chain {
    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome {
        self.executed.fetch_add(1, Ordering::Relaxed);
        if task.payload > 0 {
            spawner.spawn(task.key, task.payload - 1);
            spawner.spawn(task.key, 0);
        }
        Outcome::Executed
    }
}

#[test]
fn stats_balance_at_quiescence() {
    for kind in BackendKind::ALL {
        let chain = Chain { executed: AtomicU64::new(0) };
        let config = SchedulerConfig::new(3).with_k(8);
        let stats = with_backend!(kind, B => run_with_options::<B, _>(&chain, Task::new(1.0, 8, 1000), &config, RunOptions::default()))
            .unwrap();
        assert_eq!(stats.pushes, 2001, "{kind}");
        assert_eq!(stats.pops, 2001, "{kind}");
        assert_eq!(stats.dead_tasks_eliminated, 0, "{kind}");
        assert_eq!(chain.executed.load(Ordering::Relaxed), 2001, "{kind}");
    }
}

/// Marks every task with an odd payload dead at pop time.
struct OddIsDead;

impl Workload for OddIsDead {
    fn is_live(&self, task: &Task) -> bool {
        task.payload.is_multiple_of(2)
    }

    fn execute<P: Place>(&self, task: Task, spawner: &mut Spawner<'_, P>) -> Outcome {
        if task.payload == 0 {
            for i in 1..=100 {
                spawner.spawn(task.key, i);
            }
        }
        Outcome::Executed
    }
}

#[test]
fn dead_tasks_are_counted_separately() {
    let config = SchedulerConfig::new(2).with_k(4);
    let stats = run_with_options::<HybridKPriority, _>(&OddIsDead, Task::new(0.0, 4, 0), &config, RunOptions::default())
        .unwrap();
    assert_eq!((stats.pushes, stats.pops, stats.dead_tasks_eliminated), (101, 51, 50));
}

#[test]
fn frozen_worker_does_not_block_the_rest() {
    for kind in [BackendKind::Central, BackendKind::Hybrid] {
        let chain = Chain { executed: AtomicU64::new(0) };
        let config = SchedulerConfig::new(4).with_k(16);
        let options = RunOptions {
            timeout: Duration::from_secs(60),
            freeze: Some(FreezePlan { place: PlaceId(0), after_tasks: 1 }),
        };
        with_backend!(kind, B => run_with_options::<B, _>(&chain, Task::new(0.0, 16, 5000), &config, options)).unwrap();
        assert_eq!(chain.executed.load(Ordering::Relaxed), 10_001, "{kind}");
    }
}

#[test]
fn central_reclaims_segments_after_a_long_run() {
    let chain = Chain { executed: AtomicU64::new(0) };
    let config = SchedulerConfig::new(3).with_k(64);
    let mut places = CentralKPriority::places(&config);
    run_on_places(&mut places, &chain, Task::new(0.0, 64, 60_000), &config, RunOptions::default()).unwrap();
    // 120k slots span about 30 segments; after the run all heads sit near the tail
    assert!(places[0].segments_reclaimed() > 0);
    assert!(places[0].live_segments() <= 3, "{} segments still linked", places[0].live_segments());
}

#[test]
fn work_stealing_drains_every_queue() {
    let chain = Chain { executed: AtomicU64::new(0) };
    let config = SchedulerConfig::new(4);
    let mut places = WorkStealing::places(&config);
    let stats = run_on_places(&mut places, &chain, Task::new(0.0, 1, 20_000), &config, RunOptions::default()).unwrap();
    assert_eq!(stats.pops, 40_001);
    assert!(places.iter().all(|p| p.queued() == 0));
}
