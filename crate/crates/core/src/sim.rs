//! Discrete-event engine: integer clock, ordered event queue, dispatch log digest.
//!
//! Events are dispatched in `(fire_at, seq)` order. `seq` is the insertion
//! counter, so simultaneous events fire in the order they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in integer microseconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    /// Multiply a duration by an integer factor, saturating.
    pub fn times(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}ms", self.as_millis_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule event at {at} before current clock {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Payloads report a stable tag so the dispatch log digest does not depend
/// on `Debug` formatting.
pub trait EventTag {
    fn tag(&self) -> u64;
}

impl EventTag for () {
    fn tag(&self) -> u64 {
        0
    }
}

impl EventTag for u32 {
    fn tag(&self) -> u64 {
        u64::from(*self)
    }
}

struct Entry<P> {
    fire_at: SimTime,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Single-threaded event engine. `Send` when the payload is, so whole engines
/// can be moved between threads.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Entry<P>>>,
    dispatched: u64,
    last_dispatch: (SimTime, u64),
    digest: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_mix(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            dispatched: 0,
            last_dispatch: (SimTime::ZERO, 0),
            digest: FNV_OFFSET,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Running FNV-1a digest over `(fire_at, seq, tag)` of every dispatched event.
    pub fn dispatch_digest(&self) -> u64 {
        self.digest
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventId, SimError> {
        if fire_at < self.now {
            return Err(SimError::SchedulingInPast { at: fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry { fire_at, seq, payload }));
        Ok(EventId(seq))
    }

    /// Schedule `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> EventId {
        let at = self.now + delay;
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Pop the next event if it fires at or before `until`, advancing the clock.
    pub fn pop_until(&mut self, until: SimTime) -> Option<(SimTime, P)>
    where
        P: EventTag,
    {
        match self.queue.peek() {
            Some(Reverse(e)) if e.fire_at <= until => {}
            _ => return None,
        }
        let Reverse(e) = self.queue.pop().expect("peeked");
        assert!(
            (e.fire_at, e.seq) > self.last_dispatch || self.dispatched == 0,
            "event dispatched out of order"
        );
        assert!(e.fire_at >= self.now, "clock would move backwards");
        self.now = e.fire_at;
        self.last_dispatch = (e.fire_at, e.seq);
        self.dispatched += 1;
        let mut h = fnv_mix(self.digest, e.fire_at.0);
        h = fnv_mix(h, e.seq);
        self.digest = fnv_mix(h, e.payload.tag());
        Some((e.fire_at, e.payload))
    }

    /// Advance the clock with no event (used at the end of a bounded run).
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Dispatch every event with `fire_at <= until` through `handler`, then
    /// set the clock to `until`. Handlers may schedule further events.
    pub fn run<F>(&mut self, until: SimTime, mut handler: F) -> u64
    where
        P: EventTag,
        F: FnMut(&mut Engine<P>, SimTime, P),
    {
        let start = self.dispatched;
        while let Some((t, p)) = self.pop_until(until) {
            handler(self, t, p);
        }
        self.advance_to(until);
        self.dispatched - start
    }

    /// Run until the queue drains; the clock stays at the last event time.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> u64
    where
        P: EventTag,
        F: FnMut(&mut Engine<P>, SimTime, P),
    {
        let start = self.dispatched;
        while let Some((t, p)) = self.pop_until(SimTime::MAX) {
            handler(self, t, p);
        }
        self.dispatched - start
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_order() {
        let mut e: Engine<u32> = Engine::new();
        e.schedule(SimTime::from_secs(5), 5).unwrap();
        e.schedule(SimTime::from_secs(3), 3).unwrap();
        let mut seen = vec![];
        e.run_to_completion(|_, _, p| seen.push(p));
        assert_eq!(seen, vec![3, 5]);
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut e: Engine<u32> = Engine::new();
        let a = e.schedule(SimTime::from_secs(7), 1).unwrap();
        let b = e.schedule(SimTime::from_secs(7), 2).unwrap();
        assert!(a < b);
        let mut seen = vec![];
        e.run_to_completion(|_, _, p| seen.push(p));
        assert_eq!(seen, vec![1, 2]);
    }

    #[test]
    fn rejects_past_schedule() {
        let mut e: Engine<u32> = Engine::new();
        e.schedule(SimTime::from_secs(4), 0).unwrap();
        e.run_to_completion(|_, _, _| {});
        assert_eq!(e.now(), SimTime::from_secs(4));
        assert_eq!(
            e.schedule(SimTime::from_secs(2), 0),
            Err(SimError::SchedulingInPast { at: SimTime::from_secs(2), now: SimTime::from_secs(4) })
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut e: Engine<u32> = Engine::new();
        let n = e.run(SimTime::from_secs(10), |_, _, _| {});
        assert_eq!(n, 0);
        assert_eq!(e.now(), SimTime::from_secs(10));
    }

    #[test]
    fn run_bound_is_inclusive() {
        let mut e: Engine<u32> = Engine::new();
        for s in 1..=3 {
            e.schedule(SimTime::from_secs(s), s as u32).unwrap();
        }
        let n = e.run(SimTime::from_secs(2), |_, _, _| {});
        assert_eq!(n, 2);
        assert_eq!(e.now(), SimTime::from_secs(2));
        assert_eq!(e.pending(), 1);
    }

    #[test]
    fn handler_scheduling_is_deterministic() {
        fn drive() -> (u64, u64) {
            let mut e: Engine<u32> = Engine::new();
            e.schedule(SimTime::ZERO, 0).unwrap();
            let mut budget = 2_000u32;
            e.run(SimTime::from_secs(1), |eng, _, p| {
                if budget >= 2 {
                    budget -= 2;
                    eng.schedule_in(SimTime::from_micros(u64::from(p % 7)), p + 1);
                    eng.schedule_in(SimTime::from_micros(u64::from(p % 3)), p + 2);
                }
            });
            (e.dispatched(), e.dispatch_digest())
        }
        assert_eq!(drive(), drive());
    }
}
