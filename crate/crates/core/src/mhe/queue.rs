//! Arrival-ordered event queue shared between sensor producers and the
//! estimator thread.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Mutex;

use crate::log::SensorEvent;

struct Queued {
    arrival: f64,
    rank: u8,
    seq: u64,
    event: SensorEvent,
}

impl Queued {
    fn key(&self) -> (f64, u8, u64) {
        (self.arrival, self.rank, self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap and the earliest event pops first
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

#[derive(Default)]
struct Inner {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

/// Events pop by arrival time, then by kind (IMU before steering before
/// radar), then by insertion order.
#[derive(Default)]
pub struct EventQueue {
    inner: Mutex<Inner>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, event: SensorEvent) {
        let mut g = self.inner.lock().expect("event queue poisoned");
        let seq = g.next_seq;
        g.next_seq += 1;
        g.heap.push(Queued {
            arrival: event.arrival_time(),
            rank: event.order_rank(),
            seq,
            event,
        });
    }

    pub fn pop(&self) -> Option<SensorEvent> {
        self.inner.lock().expect("event queue poisoned").heap.pop().map(|q| q.event)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("event queue poisoned").heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
