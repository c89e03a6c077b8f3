//! Centralized k-priority backend.
//!
//! Tasks live in items that are placed into a global array at a random free
//! slot of the window `[tail, tail + k)`. `tail` only moves forward by `k`
//! once every slot of that window is filled, so an item always lands at most
//! `k` slots past the tail value current at insertion. A `k = 0` push uses a
//! one-slot window and advances the tail past its item at once. Each place scans the
//! array from its private `head` up to `tail` and keeps references to the
//! items it found in a local binary heap; items past `tail` are visible only
//! to their creator (plus the occasional random probe). Taking an item is a
//! single compare-and-swap of its tag from the slot index to [`TAKEN`].
//!
//! The array is a linked list of [`SEGMENT_SLOTS`]-slot segments. A segment
//! becomes unreachable once every place's head has left it and all of its
//! items are taken; it is then unlinked from the front of the list and freed
//! after an epoch grace period. Items are pooled per place and reused as soon
//! as they are taken. Slot indices only grow, so a tag never repeats for the
//! same item and stale references fail their compare-and-swap.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};
use rand::rngs::SmallRng;
use rand::Rng;

use crate::sched::{Backend, BackendKind, Place, PlaceId, PriorityKey, SchedulerConfig, Task, MAX_K};

/// Slots per global-array segment. A multiple of every allowed `k_max`.
pub const SEGMENT_SLOTS: usize = MAX_K;

/// Tag of an item that has been taken (or was never placed).
pub const TAKEN: u64 = u64::MAX;

const ITEM_CHUNK: usize = 1024;
const RECYCLE_SCAN: usize = 8;

pub struct CentralKPriority;

impl Backend for CentralKPriority {
    type Place = CentralPlace;

    const KIND: BackendKind = BackendKind::Central;

    fn places(config: &SchedulerConfig) -> Vec<CentralPlace> {
        Self::places_with_window_slack(config, 0)
    }
}

impl CentralKPriority {
    /// Builds places whose insertion window is `k + slack` wide instead of `k`.
    /// Any slack breaks the relaxation guarantee; it exists for mutation tests.
    #[doc(hidden)]
    pub fn places_with_window_slack(config: &SchedulerConfig, slack: usize) -> Vec<CentralPlace> {
        let array = Arc::new(GlobalArray::new(config.places, config.k_max));
        (0..config.places)
            .map(|i| CentralPlace {
                id: PlaceId(i),
                head: 0,
                head_seg: array.first_segment_raw(),
                array: Arc::clone(&array),
                queue: BinaryHeap::new(),
                rng: config.place_rng(i),
                pool: Vec::new(),
                recycle_at: 0,
                window_slack: slack,
                probes_won: 0,
            })
            .collect()
    }
}

struct Item {
    /// Creating place; fixed for the item's whole life since pools are per place.
    place: usize,
    key: AtomicU64,
    k: AtomicU64,
    payload: AtomicU64,
    tag: AtomicU64,
}

impl Item {
    fn vacant(place: usize) -> Self {
        Item {
            place,
            key: AtomicU64::new(0),
            k: AtomicU64::new(0),
            payload: AtomicU64::new(0),
            tag: AtomicU64::new(TAKEN),
        }
    }
}

struct Segment {
    base: u64,
    slots: Box<[AtomicPtr<Item>]>,
    next: Atomic<Segment>,
    /// Places whose head has not yet moved past this segment.
    place_refs: AtomicUsize,
    taken: AtomicUsize,
}

impl Segment {
    fn new(base: u64, places: usize) -> Self {
        Segment {
            base,
            slots: (0..SEGMENT_SLOTS).map(|_| AtomicPtr::new(ptr::null_mut())).collect(),
            next: Atomic::null(),
            place_refs: AtomicUsize::new(places),
            taken: AtomicUsize::new(0),
        }
    }

    fn contains(&self, pos: u64) -> bool {
        pos >= self.base && pos < self.base + SEGMENT_SLOTS as u64
    }

    fn slot(&self, pos: u64) -> &AtomicPtr<Item> {
        &self.slots[(pos - self.base) as usize]
    }
}

struct GlobalArray {
    tail: AtomicU64,
    first: Atomic<Segment>,
    /// Some segment with `base <= tail`; never moves backwards.
    tail_seg: Atomic<Segment>,
    places: usize,
    k_max: usize,
    /// Item storage per place. Only the owner appends; chunks never move.
    arenas: Vec<Mutex<Vec<Box<[Item]>>>>,
    live_segments: AtomicUsize,
    reclaimed: AtomicU64,
}

// Raw item pointers are shared across threads; all item fields are atomics.
unsafe impl Send for GlobalArray {}
unsafe impl Sync for GlobalArray {}

impl GlobalArray {
    fn new(places: usize, k_max: usize) -> Self {
        assert!((1..=SEGMENT_SLOTS).contains(&k_max));
        let first = Atomic::new(Segment::new(0, places));
        let tail_seg = first.clone();
        GlobalArray {
            tail: AtomicU64::new(0),
            first,
            tail_seg,
            places,
            k_max,
            arenas: (0..places).map(|_| Mutex::new(Vec::new())).collect(),
            live_segments: AtomicUsize::new(1),
            reclaimed: AtomicU64::new(0),
        }
    }

    fn first_segment_raw(&self) -> *const Segment {
        // Safe without a guard: nothing is reclaimed before every place leaves it.
        unsafe { self.first.load(Ordering::Acquire, epoch::unprotected()).as_raw() }
    }

    /// Walks forward from `from` to the segment holding `pos`, appending
    /// segments when `grow` is set. `None` if `pos` precedes `from` or the
    /// segment does not exist yet.
    fn walk<'g>(&self, from: Shared<'g, Segment>, pos: u64, grow: bool, guard: &'g Guard) -> Option<Shared<'g, Segment>> {
        let mut cur = from;
        loop {
            let seg = unsafe { cur.deref() };
            if pos < seg.base {
                return None;
            }
            if seg.contains(pos) {
                return Some(cur);
            }
            let mut next = seg.next.load(Ordering::Acquire, guard);
            if next.is_null() {
                if !grow {
                    return None;
                }
                let fresh = Owned::new(Segment::new(seg.base + SEGMENT_SLOTS as u64, self.places));
                match seg.next.compare_exchange(Shared::null(), fresh, Ordering::AcqRel, Ordering::Acquire, guard) {
                    Ok(linked) => {
                        self.live_segments.fetch_add(1, Ordering::Relaxed);
                        next = linked;
                    }
                    Err(e) => next = e.current,
                }
            }
            cur = next;
        }
    }

    fn advance_tail_seg<'g>(&self, seen: Shared<'g, Segment>, to: Shared<'g, Segment>, guard: &'g Guard) {
        if seen != to {
            let _ = self.tail_seg.compare_exchange(seen, to, Ordering::AcqRel, Ordering::Relaxed, guard);
        }
    }

    /// Unlinks fully consumed segments from the front of the list.
    fn try_reclaim(&self, guard: &Guard) {
        loop {
            let first = self.first.load(Ordering::Acquire, guard);
            let seg = unsafe { first.deref() };
            let next = seg.next.load(Ordering::Acquire, guard);
            if next.is_null()
                || seg.place_refs.load(Ordering::Acquire) != 0
                || seg.taken.load(Ordering::Acquire) != SEGMENT_SLOTS
            {
                return;
            }
            let _ = self.tail_seg.compare_exchange(first, next, Ordering::AcqRel, Ordering::Relaxed, guard);
            if self
                .first
                .compare_exchange(first, next, Ordering::AcqRel, Ordering::Relaxed, guard)
                .is_ok()
            {
                self.live_segments.fetch_sub(1, Ordering::Relaxed);
                self.reclaimed.fetch_add(1, Ordering::Relaxed);
                unsafe { guard.defer_destroy(first) };
            }
        }
    }
}

impl Drop for GlobalArray {
    fn drop(&mut self) {
        unsafe {
            let guard = epoch::unprotected();
            let mut cur = self.first.load(Ordering::Relaxed, guard);
            while !cur.is_null() {
                let next = cur.deref().next.load(Ordering::Relaxed, guard);
                drop(cur.into_owned());
                cur = next;
            }
        }
    }
}

/// Reference to an item as seen at slot `pos`.
struct ItemRef {
    key: PriorityKey,
    pos: u64,
    item: *const Item,
    seg: *const Segment,
}

// Max-heap order: best key first, earlier slot on ties.
impl Ord for ItemRef {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other.key.cmp(&self.key).then_with(|| other.pos.cmp(&self.pos))
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

pub struct CentralPlace {
    id: PlaceId,
    array: Arc<GlobalArray>,
    queue: BinaryHeap<ItemRef>,
    head: u64,
    /// Segment holding `head`; kept alive by this place's `place_refs` share.
    head_seg: *const Segment,
    rng: SmallRng,
    pool: Vec<*const Item>,
    recycle_at: usize,
    window_slack: usize,
    probes_won: u64,
}

// The raw pointers target memory owned by the shared array.
unsafe impl Send for CentralPlace {}

impl CentralPlace {
    /// Current shared tail index.
    pub fn tail(&self) -> u64 {
        self.array.tail.load(Ordering::Acquire)
    }

    /// Segments currently linked into the global array.
    pub fn live_segments(&self) -> usize {
        self.array.live_segments.load(Ordering::Relaxed)
    }

    pub fn segments_reclaimed(&self) -> u64 {
        self.array.reclaimed.load(Ordering::Relaxed)
    }

    /// Items ever allocated by this place.
    pub fn pooled_items(&self) -> usize {
        self.pool.len()
    }

    fn alloc_item(&mut self) -> *const Item {
        let n = self.pool.len();
        for _ in 0..RECYCLE_SCAN.min(n) {
            let candidate = self.pool[self.recycle_at];
            self.recycle_at = (self.recycle_at + 1) % n;
            // Acquire pairs with the taker's CAS: its reads of the old task
            // happen before our overwrite.
            if unsafe { &*candidate }.tag.load(Ordering::Acquire) == TAKEN {
                return candidate;
            }
        }
        let chunk: Box<[Item]> = (0..ITEM_CHUNK).map(|_| Item::vacant(self.id.0)).collect();
        let base = chunk.as_ptr();
        self.array.arenas[self.id.0].lock().unwrap_or_else(|e| e.into_inner()).push(chunk);
        // newly added items go first in the recycle order
        let start = self.pool.len();
        self.pool.extend((0..ITEM_CHUNK).map(|i| unsafe { base.add(i) }));
        self.recycle_at = start + 1;
        base
    }

    /// Adds references to items in `[head, tail)` created by other places.
    fn scan(&mut self) {
        let tail = self.array.tail.load(Ordering::Acquire);
        while self.head < tail {
            let seg = unsafe { &*self.head_seg };
            if !seg.contains(self.head) {
                let guard = epoch::pin();
                let next = seg.next.load(Ordering::Acquire, &guard);
                debug_assert!(!next.is_null(), "segment below tail must have a successor");
                self.head_seg = next.as_raw();
                if seg.place_refs.fetch_sub(1, Ordering::AcqRel) == 1 {
                    self.array.try_reclaim(&guard);
                }
                continue;
            }
            let item_ptr = seg.slot(self.head).load(Ordering::Acquire);
            debug_assert!(!item_ptr.is_null(), "slot below tail is empty");
            let item = unsafe { &*item_ptr };
            if item.place != self.id.0 {
                self.queue.push(ItemRef {
                    key: PriorityKey::from_bits(item.key.load(Ordering::Relaxed)),
                    pos: self.head,
                    item: item_ptr,
                    seg,
                });
            }
            self.head += 1;
        }
    }

    fn try_take(&self, item: &Item, pos: u64, seg: *const Segment) -> Option<Task> {
        // The task is read before the CAS; the item may be reused right after it.
        let key = item.key.load(Ordering::Relaxed);
        let k = item.k.load(Ordering::Relaxed);
        let payload = item.payload.load(Ordering::Relaxed);
        item.tag.compare_exchange(pos, TAKEN, Ordering::AcqRel, Ordering::Relaxed).ok()?;
        // A successful take proves the segment still has untaken items, so it is alive.
        let seg = unsafe { &*seg };
        if seg.taken.fetch_add(1, Ordering::AcqRel) + 1 == SEGMENT_SLOTS {
            self.array.try_reclaim(&epoch::pin());
        }
        Some(Task { key: PriorityKey::from_bits(key), k: k as usize, payload })
    }

    /// One random look past the tail; only items still inside their own
    /// k-window relative to an unchanged tail are taken.
    fn probe(&mut self) -> Option<Task> {
        let guard = epoch::pin();
        let hint = self.array.tail_seg.load(Ordering::Acquire, &guard);
        let tail = self.array.tail.load(Ordering::Acquire);
        let offset = self.rng.gen_range(0..self.array.k_max) as u64;
        let pos = tail + offset;
        let seg = self.array.walk(hint, pos, false, &guard)?;
        let seg_ref = unsafe { seg.deref() };
        let item_ptr = seg_ref.slot(pos).load(Ordering::Acquire);
        if item_ptr.is_null() {
            return None;
        }
        let item = unsafe { &*item_ptr };
        if item.tag.load(Ordering::Acquire) != pos {
            return None;
        }
        let window = item.k.load(Ordering::Relaxed).max(1);
        if offset >= window {
            return None;
        }
        if self.array.tail.load(Ordering::Acquire) != tail {
            return None;
        }
        let task = self.try_take(item, pos, seg.as_raw())?;
        self.probes_won += 1;
        Some(task)
    }
}

impl Place for CentralPlace {
    fn id(&self) -> PlaceId {
        self.id
    }

    fn push(&mut self, task: Task) {
        let k = task.k.min(self.array.k_max);
        let window = (k.max(1) + self.window_slack) as u64;
        let item_ptr = self.alloc_item() as *mut Item;
        // pooled items live as long as the array this place holds
        let item = unsafe { &*item_ptr };
        item.key.store(task.key.to_bits(), Ordering::Relaxed);
        item.k.store(k as u64, Ordering::Relaxed);
        item.payload.store(task.payload, Ordering::Relaxed);

        let guard = epoch::pin();
        loop {
            let hint = self.array.tail_seg.load(Ordering::Acquire, &guard);
            let t = self.array.tail.load(Ordering::Acquire);
            let Some(start) = self.array.walk(hint, t, true, &guard) else {
                continue;
            };
            self.array.advance_tail_seg(hint, start, &guard);

            let offset = self.rng.gen_range(0..window);
            for i in offset..offset + window {
                let pos = t + i % window;
                let seg = self.array.walk(start, pos, true, &guard).expect("pos is past the window start");
                let seg_ref = unsafe { seg.deref() };
                let slot = seg_ref.slot(pos);
                // A slot this item ever occupied stays non-null, so the tag
                // written below can never match a stale reference.
                if !slot.load(Ordering::Acquire).is_null() {
                    continue;
                }
                item.tag.store(pos, Ordering::Relaxed);
                if slot
                    .compare_exchange(ptr::null_mut(), item_ptr, Ordering::AcqRel, Ordering::Acquire)
                    .is_ok()
                {
                    self.queue.push(ItemRef { key: task.key, pos, item: item_ptr, seg: seg.as_raw() });
                    if k == 0 && window == 1 {
                        // k = 0 is published at once; a failed CAS means tail already moved past `pos`
                        let _ = self.array.tail.compare_exchange(t, t + 1, Ordering::AcqRel, Ordering::Relaxed);
                    }
                    return;
                }
            }
            // Window full: move tail on. Losing this race means someone else did.
            let _ = self.array.tail.compare_exchange(t, t + window, Ordering::AcqRel, Ordering::Relaxed);
        }
    }

    fn pop(&mut self) -> Option<Task> {
        self.scan();
        while let Some(r) = self.queue.pop() {
            let item = unsafe { &*r.item };
            if let Some(task) = self.try_take(item, r.pos, r.seg) {
                return Some(task);
            }
            // stale reference: the item was taken, maybe reused; look for news first
            self.scan();
        }
        self.probe()
    }

    fn steals_or_spies(&self) -> u64 {
        self.probes_won
    }
}
