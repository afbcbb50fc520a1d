//! Deterministic discrete-event scheduling and seeded random streams.
//!
//! The scheduler is a min-heap keyed on `(fire_time, sequence)`. Sequence
//! numbers are assigned at scheduling time, so events that share a fire time
//! run in the order they were scheduled. Cancellation is lazy: a cancelled
//! event stays in the heap and is skipped when popped.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Simulation clock value in seconds.
pub type Time = f64;

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

#[derive(Debug)]
struct Scheduled<E> {
    fire_time: Time,
    sequence: u64,
    action: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .total_cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Single-threaded event queue with a monotone clock.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: Time,
    next_sequence: u64,
    queue: BinaryHeap<Scheduled<E>>,
    pending: HashSet<u64>,
    fired: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    /// Number of events executed so far.
    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Schedules `action` to fire `delay` seconds from now.
    pub fn schedule(&mut self, delay: Time, action: E) -> Result<EventHandle> {
        if !delay.is_finite() || delay < 0.0 {
            return Err(Error::InvalidDelay(delay));
        }
        Ok(self.push(self.now + delay, action))
    }

    /// Schedules `action` at an absolute time, which must not lie in the past.
    pub fn schedule_at(&mut self, fire_time: Time, action: E) -> Result<EventHandle> {
        self.schedule(fire_time - self.now, action)
            .map_err(|_| Error::InvalidDelay(fire_time - self.now))
    }

    fn push(&mut self, fire_time: Time, action: E) -> EventHandle {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Scheduled {
            fire_time,
            sequence,
            action,
        });
        self.pending.insert(sequence);
        EventHandle(sequence)
    }

    /// Removes a pending event. Returns `false` for events that already
    /// fired or were cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing the clock
    /// to its fire time.
    pub fn next_until(&mut self, t_end: Time) -> Option<(Time, E)> {
        loop {
            let head = self.queue.peek()?;
            if head.fire_time > t_end {
                return None;
            }
            let event = self.queue.pop().expect("peeked");
            if !self.pending.remove(&event.sequence) {
                continue;
            }
            debug_assert!(event.fire_time >= self.now);
            self.now = event.fire_time;
            self.fired += 1;
            return Some((event.fire_time, event.action));
        }
    }

    /// Advances the clock to `t_end` without executing anything.
    pub fn advance_to(&mut self, t_end: Time) {
        if t_end > self.now {
            self.now = t_end;
        }
    }

    /// Executes every event with `fire_time <= t_end` in order and leaves the
    /// clock at `t_end`. The handler may schedule or cancel further events.
    pub fn run_until<F>(&mut self, t_end: Time, mut handler: F) -> Time
    where
        F: FnMut(&mut Self, E),
    {
        while let Some((_, action)) = self.next_until(t_end) {
            handler(self, action);
        }
        self.advance_to(t_end);
        self.now
    }
}

/// Derives independent, reproducible random streams from one master seed.
///
/// A stream is identified by a name and the run index; the generator seed is
/// the SHA-256 digest of `(master_seed, run_index, name)`, so creating streams
/// for new nodes never shifts the draws of existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngFactory {
    master_seed: u64,
    run_index: u32,
}

impl RngFactory {
    pub fn new(master_seed: u64, run_index: u32) -> Self {
        Self {
            master_seed,
            run_index,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn run_index(&self) -> u32 {
        self.run_index
    }

    pub fn stream(&self, name: impl Into<String>) -> RngStream {
        let name = name.into();
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.run_index.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RngStream {
            name,
            run_index: self.run_index,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }
}

/// A named generator; implements [`RngCore`] so it plugs into `rand`.
#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    run_index: u32,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn run_index(&self) -> u32 {
        self.run_index
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
