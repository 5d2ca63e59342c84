//! Time-ordered event queue with deterministic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Simulated time in seconds.
pub type SimTime = f64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ScheduleError {
    #[error("cannot schedule an event at t={at} s: clock is already at t={now} s")]
    InThePast { at: SimTime, now: SimTime },
    #[error("event time {0} is not a finite number")]
    NotFinite(SimTime),
}

/// A scheduled event. `seq` is the insertion counter used to order events
/// that share the same timestamp.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub time: SimTime,
    pub seq: u64,
    pub kind: K,
}

impl<K> PartialEq for Event<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for Event<K> {}

impl<K> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Event<K> {
    // Reversed so that `BinaryHeap` pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Event<K>>,
    now: SimTime,
    next_seq: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: 0.0,
            next_seq: 0,
        }
    }

    /// Current simulated clock.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, kind: K) -> Result<u64, ScheduleError> {
        if !time.is_finite() {
            return Err(ScheduleError::NotFinite(time));
        }
        if time < self.now {
            return Err(ScheduleError::InThePast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
        Ok(seq)
    }

    /// Schedules `kind` at `now + delay`.
    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> Result<u64, ScheduleError> {
        self.schedule(self.now + delay, kind)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Pops the next event if it is due at or before `limit`, advancing the clock.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Event<K>> {
        match self.heap.peek() {
            Some(e) if e.time <= limit => {
                let ev = self.heap.pop()?;
                self.now = ev.time;
                Some(ev)
            }
            _ => None,
        }
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        self.pop_until(SimTime::INFINITY)
    }

    /// Moves the clock forward to `t` without dispatching anything.
    /// Moving backwards is ignored.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatches_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(5.0, "five").unwrap();
        q.schedule(3.0, "three").unwrap();
        assert_eq!(q.pop().unwrap().kind, "three");
        assert_eq!(q.pop().unwrap().kind, "five");
        assert!(q.pop().is_none());
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..10 {
            q.schedule(3.0, i).unwrap();
        }
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(order, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(2.0, ()).unwrap();
        q.pop().unwrap();
        assert_eq!(q.now(), 2.0);
        assert_eq!(
            q.schedule(1.0, ()),
            Err(ScheduleError::InThePast { at: 1.0, now: 2.0 })
        );
        assert!(matches!(q.schedule(f64::NAN, ()), Err(ScheduleError::NotFinite(_))));
    }

    #[test]
    fn pop_until_respects_limit() {
        let mut q = EventQueue::new();
        q.schedule(1.0, 1).unwrap();
        q.schedule(4.0, 4).unwrap();
        assert_eq!(q.pop_until(2.0).unwrap().kind, 1);
        assert!(q.pop_until(2.0).is_none());
        q.advance_to(2.0);
        assert_eq!(q.now(), 2.0);
        assert_eq!(q.len(), 1);
    }
}
