//! Hybrid k-priority backend.
//!
//! Every place appends new tasks to a private local list and keeps a
//! reference in its own binary heap. The local list is published (linked
//! onto the global list) as soon as some task in it has seen `k` further
//! pushes, tracked by `remaining_k`. Other places pick up published items
//! by walking the global list from their private iterator. A place whose
//! heap runs dry spies on a random victim's local list, copying references
//! without removing anything.
//!
//! Items are stored in place inside fixed-size blocks; a block is a local
//! list while unpublished and a global-list node afterwards. Each item's tag
//! is its per-place sequence number while live and [`TAKEN`] afterwards, so
//! duplicate references (spied, then published) still yield one take.
//! Blocks are freed when the structure is dropped.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::Rng;

use crate::sched::{Backend, BackendKind, Place, PlaceId, PriorityKey, SchedulerConfig, Task};

pub const TAKEN: u64 = u64::MAX;

const NO_VICTIM: usize = usize::MAX;
const UNBOUNDED: u64 = u64::MAX;

pub struct HybridKPriority;

impl Backend for HybridKPriority {
    type Place = HybridPlace;

    const KIND: BackendKind = BackendKind::Hybrid;

    fn places(config: &SchedulerConfig) -> Vec<HybridPlace> {
        let shared = Arc::new(GlobalList {
            head: Box::into_raw(Box::new(Block::new(NO_VICTIM, 0, 0))),
            locals: (0..config.places).map(|_| AtomicPtr::new(ptr::null_mut())).collect(),
            last_victim: (0..config.places).map(|_| AtomicUsize::new(NO_VICTIM)).collect(),
            k_max: config.k_max,
        });
        (0..config.places)
            .map(|i| HybridPlace {
                id: PlaceId(i),
                iter: shared.head,
                shared: Arc::clone(&shared),
                queue: BinaryHeap::new(),
                local: ptr::null_mut(),
                local_len: 0,
                remaining_k: UNBOUNDED,
                next_seq: 0,
                rng: config.place_rng(i),
                spies: 0,
            })
            .collect()
    }
}

struct Item {
    key: AtomicU64,
    k: AtomicU64,
    payload: AtomicU64,
    tag: AtomicU64,
}

struct Block {
    place: usize,
    /// Sequence number of `items[0]`, fixed before the block is shared.
    base_seq: u64,
    /// Items written so far; released by the owner after each append.
    len: AtomicUsize,
    items: Box<[Item]>,
    next: AtomicPtr<Block>,
}

impl Block {
    fn new(place: usize, base_seq: u64, capacity: usize) -> Self {
        Block {
            place,
            base_seq,
            len: AtomicUsize::new(0),
            items: (0..capacity)
                .map(|_| Item {
                    key: AtomicU64::new(0),
                    k: AtomicU64::new(0),
                    payload: AtomicU64::new(0),
                    tag: AtomicU64::new(TAKEN),
                })
                .collect(),
            next: AtomicPtr::new(ptr::null_mut()),
        }
    }

    /// Live items among the first `len` entries, as `(index, seq)`.
    fn live(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        let len = self.len.load(Ordering::Acquire);
        (0..len).filter_map(move |i| {
            let seq = self.base_seq + i as u64;
            (self.items[i].tag.load(Ordering::Acquire) == seq).then_some((i, seq))
        })
    }
}

struct GlobalList {
    /// Empty sentinel block; published blocks hang off its `next`.
    head: *mut Block,
    /// Each place's unpublished block, or null.
    locals: Vec<AtomicPtr<Block>>,
    last_victim: Vec<AtomicUsize>,
    k_max: usize,
}

unsafe impl Send for GlobalList {}
unsafe impl Sync for GlobalList {}

impl Drop for GlobalList {
    fn drop(&mut self) {
        unsafe {
            let mut cur = self.head;
            while !cur.is_null() {
                let next = (*cur).next.load(Ordering::Relaxed);
                drop(Box::from_raw(cur));
                cur = next;
            }
            // whatever is still local was never linked
            for local in &self.locals {
                let b = local.load(Ordering::Relaxed);
                if !b.is_null() {
                    drop(Box::from_raw(b));
                }
            }
        }
    }
}

struct ItemRef {
    key: PriorityKey,
    place: usize,
    seq: u64,
    item: *const Item,
}

impl Ord for ItemRef {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other
            .key
            .cmp(&self.key)
            .then_with(|| other.place.cmp(&self.place))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for ItemRef {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for ItemRef {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}

impl Eq for ItemRef {}

pub struct HybridPlace {
    id: PlaceId,
    shared: Arc<GlobalList>,
    queue: BinaryHeap<ItemRef>,
    /// Last global-list block this place has processed.
    iter: *const Block,
    local: *mut Block,
    local_len: usize,
    remaining_k: u64,
    next_seq: u64,
    rng: SmallRng,
    spies: u64,
}

unsafe impl Send for HybridPlace {}

impl HybridPlace {
    /// Pushes left before the local list must be published; `None` when the
    /// local list is empty.
    pub fn remaining_k(&self) -> Option<u64> {
        (self.remaining_k != UNBOUNDED).then_some(self.remaining_k)
    }

    /// Items in this place's unpublished local list.
    pub fn unpublished(&self) -> usize {
        self.local_len
    }

    /// `(creating place, sequence number)` of every reference in the local heap.
    pub fn queued_refs(&self) -> Vec<(PlaceId, u64)> {
        self.queue.iter().map(|r| (PlaceId(r.place), r.seq)).collect()
    }

    /// Fingerprint of this place's local list (length, tags and keys).
    pub fn local_fingerprint(&self) -> u64 {
        if self.local.is_null() {
            return 0;
        }
        let block = unsafe { &*self.local };
        let len = block.len.load(Ordering::Acquire);
        block.items[..len].iter().fold(len as u64, |h, it| {
            let mix = it.tag.load(Ordering::Acquire) ^ it.key.load(Ordering::Relaxed).rotate_left(17);
            h.rotate_left(5) ^ mix.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        })
    }

    fn push_ref(&mut self, block: &Block, index: usize, seq: u64) {
        let item = &block.items[index];
        self.queue.push(ItemRef {
            key: PriorityKey::from_bits(item.key.load(Ordering::Relaxed)),
            place: block.place,
            seq,
            item,
        });
    }

    /// Adds references to live, foreign items published since the last call.
    pub fn process_global_list(&mut self) {
        loop {
            let next = unsafe { &*self.iter }.next.load(Ordering::Acquire);
            if next.is_null() {
                return;
            }
            self.iter = next;
            let block = unsafe { &*next };
            if block.place == self.id.0 {
                continue;
            }
            for (i, seq) in block.live() {
                self.push_ref(block, i, seq);
            }
        }
    }

    /// Copies references to a victim's live local items. Read-only on the victim.
    pub fn spy(&mut self) {
        let places = self.shared.locals.len();
        if places < 2 {
            return;
        }
        let mut victim = self.rng.gen_range(0..places - 1);
        if victim >= self.id.0 {
            victim += 1;
        }
        for _ in 0..places {
            let block = self.shared.locals[victim].load(Ordering::Acquire);
            let mut found = 0;
            if !block.is_null() {
                // blocks are never freed while the structure is alive
                let block = unsafe { &*block };
                for (i, seq) in block.live() {
                    self.push_ref(block, i, seq);
                    found += 1;
                }
            }
            if found > 0 {
                self.shared.last_victim[self.id.0].store(victim, Ordering::Relaxed);
                self.spies += 1;
                return;
            }
            let hop = self.shared.last_victim[victim].load(Ordering::Relaxed);
            if hop == NO_VICTIM || hop == self.id.0 {
                return;
            }
            victim = hop;
        }
    }

    fn publish(&mut self) {
        let block = self.local;
        loop {
            self.process_global_list();
            let tail = unsafe { &*self.iter };
            if tail
                .next
                .compare_exchange(ptr::null_mut(), block, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                break;
            }
        }
        self.shared.locals[self.id.0].store(ptr::null_mut(), Ordering::Release);
        self.local = ptr::null_mut();
        self.local_len = 0;
        self.remaining_k = UNBOUNDED;
    }
}

impl Place for HybridPlace {
    fn id(&self) -> PlaceId {
        self.id
    }

    fn push(&mut self, task: Task) {
        let k = task.k.min(self.shared.k_max) as u64;
        if self.local.is_null() {
            // remaining_k starts at this k and only shrinks, so k + 1 items fit
            let block = Box::into_raw(Box::new(Block::new(self.id.0, self.next_seq, k as usize + 1)));
            self.local = block;
            self.shared.locals[self.id.0].store(block, Ordering::Release);
        }
        let block = unsafe { &*self.local };
        let index = self.local_len;
        let seq = self.next_seq;
        assert!(index < block.items.len(), "local list overflow");
        let item = &block.items[index];
        item.key.store(task.key.to_bits(), Ordering::Relaxed);
        item.k.store(k, Ordering::Relaxed);
        item.payload.store(task.payload, Ordering::Relaxed);
        item.tag.store(seq, Ordering::Relaxed);
        block.len.store(index + 1, Ordering::Release);
        self.local_len += 1;
        self.next_seq += 1;
        self.queue.push(ItemRef { key: task.key, place: self.id.0, seq, item });

        self.remaining_k = (self.remaining_k - 1).min(k);
        if self.remaining_k == 0 {
            self.publish();
        }
    }

    fn pop(&mut self) -> Option<Task> {
        loop {
            self.process_global_list();
            while let Some(r) = self.queue.pop() {
                let item = unsafe { &*r.item };
                if item.tag.load(Ordering::Acquire) == r.seq {
                    let task = Task {
                        key: PriorityKey::from_bits(item.key.load(Ordering::Relaxed)),
                        k: item.k.load(Ordering::Relaxed) as usize,
                        payload: item.payload.load(Ordering::Relaxed),
                    };
                    if item
                        .tag
                        .compare_exchange(r.seq, TAKEN, Ordering::AcqRel, Ordering::Relaxed)
                        .is_ok()
                    {
                        return Some(task);
                    }
                }
                self.process_global_list();
            }
            self.spy();
            if self.queue.is_empty() {
                return None;
            }
        }
    }

    fn steals_or_spies(&self) -> u64 {
        self.spies
    }
}
