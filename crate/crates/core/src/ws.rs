//! Work-stealing baseline: one priority queue per place, steal-half on empty.
//!
//! Each queue sits behind a mutex taken by the owner's push/pop and by
//! thieves. A thief moves the worse half (floor of the observed size) of a
//! random victim's queue into its own queue and runs the best stolen task.
//! The victim keeps the tasks it would have run next.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Arc, Mutex, MutexGuard};

use rand::rngs::SmallRng;
use rand::Rng;

use crate::sched::{Backend, BackendKind, Place, PlaceId, PriorityKey, SchedulerConfig, Task};

pub struct WorkStealing;

impl Backend for WorkStealing {
    type Place = WsPlace;

    const KIND: BackendKind = BackendKind::WorkStealing;

    fn places(config: &SchedulerConfig) -> Vec<WsPlace> {
        let shared = Arc::new(Shared {
            queues: (0..config.places).map(|_| Mutex::new(BinaryHeap::new())).collect(),
        });
        (0..config.places)
            .map(|i| WsPlace {
                id: PlaceId(i),
                shared: Arc::clone(&shared),
                rng: config.place_rng(i),
                seq: 0,
                steals: 0,
            })
            .collect()
    }
}

struct Entry {
    key: PriorityKey,
    seq: u64,
    task: Task,
}

// Max-heap order: the greatest entry is the one to run first.
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

struct Shared {
    queues: Vec<Mutex<BinaryHeap<Entry>>>,
}

impl Shared {
    fn lock(&self, place: usize) -> MutexGuard<'_, BinaryHeap<Entry>> {
        // a poisoned latch only means another worker panicked; the heap is intact
        self.queues[place].lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct WsPlace {
    id: PlaceId,
    shared: Arc<Shared>,
    rng: SmallRng,
    seq: u64,
    steals: u64,
}

impl WsPlace {
    /// Number of tasks currently queued at this place.
    pub fn queued(&self) -> usize {
        self.shared.lock(self.id.0).len()
    }

    /// Moves floor(n/2) of the victim's worst tasks out, n being the size seen.
    fn steal_half(&self, victim: usize) -> Vec<Entry> {
        let mut queue = self.shared.lock(victim);
        let take = queue.len() / 2;
        if take == 0 {
            return Vec::new();
        }
        // ascending order = worst first
        let mut all = std::mem::take(&mut *queue).into_sorted_vec();
        let keep = all.split_off(take);
        *queue = BinaryHeap::from(keep);
        all
    }
}

impl Place for WsPlace {
    fn id(&self) -> PlaceId {
        self.id
    }

    fn push(&mut self, task: Task) {
        self.seq += 1;
        let entry = Entry { key: task.key, seq: self.seq, task };
        self.shared.lock(self.id.0).push(entry);
    }

    fn pop(&mut self) -> Option<Task> {
        if let Some(e) = self.shared.lock(self.id.0).pop() {
            return Some(e.task);
        }
        let places = self.shared.queues.len();
        if places < 2 {
            return None;
        }
        for _ in 0..places {
            let mut victim = self.rng.gen_range(0..places - 1);
            if victim >= self.id.0 {
                victim += 1;
            }
            let stolen = self.steal_half(victim);
            if stolen.is_empty() {
                continue;
            }
            self.steals += 1;
            let mut own = self.shared.lock(self.id.0);
            own.extend(stolen);
            return own.pop().map(|e| e.task);
        }
        None
    }

    fn steals_or_spies(&self) -> u64 {
        self.steals
    }
}
