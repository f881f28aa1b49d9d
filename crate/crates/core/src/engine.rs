//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq_id)` where `seq_id` is a global
//! insertion counter, so two events scheduled for the same instant fire in
//! the order they were scheduled. Time is integer microseconds.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

/// Simulated time in integer microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Converts fractional milliseconds, rounding to the nearest microsecond.
    pub fn from_millis_f64(ms: f64) -> Self {
        assert!(ms.is_finite() && ms >= 0.0, "invalid time {ms} ms");
        SimTime((ms * 1_000.0).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Formats as milliseconds with exactly three decimals (exact in microseconds).
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1_000, self.0 % 1_000)
    }
}

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    #[cfg(test)]
    pub(crate) fn from_raw(id: u64) -> Self {
        EventHandle(id)
    }

    #[cfg(test)]
    pub(crate) fn raw(self) -> u64 {
        self.0
    }
}

/// A dispatched event.
#[derive(Clone, Debug)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq_id: u64,
    pub payload: E,
}

struct Entry<E> {
    fire_at: SimTime,
    seq_id: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq_id == other.seq_id
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.seq_id).cmp(&(other.fire_at, other.seq_id))
    }
}

/// Virtual clock plus pending-event queue.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
    pending: HashSet<u64>,
    dispatched: u64,
    cancelled: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            dispatched: 0,
            cancelled: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Enqueues `payload` to fire at `fire_at`.
    ///
    /// Panics if `fire_at` lies before the current clock: that is a bug in the
    /// model, not a recoverable condition.
    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> EventHandle {
        assert!(
            fire_at >= self.now,
            "event in past: fire_at={fire_at} ms, clock={} ms",
            self.now
        );
        let seq_id = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq_id);
        self.queue.push(Reverse(Entry {
            fire_at,
            seq_id,
            payload,
        }));
        EventHandle(seq_id)
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        self.schedule(self.now.saturating_add(delay), payload)
    }

    /// Returns true iff the event had not fired yet and is now dead.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let removed = self.pending.remove(&handle.0);
        if removed {
            self.cancelled += 1;
        }
        removed
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Number of live (scheduled, not cancelled, not fired) events.
    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn cancelled(&self) -> u64 {
        self.cancelled
    }

    /// Total number of events ever scheduled.
    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    fn discard_dead_head(&mut self) {
        while let Some(Reverse(head)) = self.queue.peek() {
            if self.pending.contains(&head.seq_id) {
                break;
            }
            self.queue.pop();
        }
    }

    /// Fire time of the next live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.discard_dead_head();
        self.queue.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Removes the next live event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<Event<E>> {
        self.discard_dead_head();
        let Reverse(entry) = self.queue.pop()?;
        self.pending.remove(&entry.seq_id);
        debug_assert!(entry.fire_at >= self.now);
        self.now = entry.fire_at;
        self.dispatched += 1;
        Some(Event {
            fire_at: entry.fire_at,
            seq_id: entry.seq_id,
            payload: entry.payload,
        })
    }

    fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// When [`Simulation::run_until`] should return.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCondition {
    /// Dispatch every event with `fire_at <= t`, then set the clock to `t`.
    MaxTime(SimTime),
    /// Stop right after the model reports this many in-order deliveries.
    Delivered(u64),
    /// Stop once no live events remain.
    QueueEmpty,
}

/// Anything that consumes events from the scheduler.
pub trait Model {
    type Payload;

    fn handle(&mut self, sched: &mut Scheduler<Self::Payload>, event: Event<Self::Payload>);

    /// In-order deliveries so far; consulted by [`StopCondition::Delivered`].
    fn delivered(&self) -> u64 {
        0
    }

    /// A model that hit a fatal condition stops the run.
    fn halted(&self) -> bool {
        false
    }
}

/// A scheduler bound to a model, with an optional dispatch log.
pub struct Simulation<M: Model> {
    pub sched: Scheduler<M::Payload>,
    pub model: M,
    log: Option<Vec<(SimTime, u64)>>,
}

impl<M: Model> Simulation<M> {
    pub fn new(model: M) -> Self {
        Self {
            sched: Scheduler::new(),
            model,
            log: None,
        }
    }

    /// Records `(fire_at, seq_id)` of every dispatched event.
    pub fn with_dispatch_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn dispatch_log(&self) -> Option<&[(SimTime, u64)]> {
        self.log.as_deref()
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Runs until any of `stops` holds (or no events remain) and returns the
    /// final clock.
    pub fn run_until(&mut self, stops: &[StopCondition]) -> SimTime {
        let max_time = stops
            .iter()
            .filter_map(|s| match s {
                StopCondition::MaxTime(t) => Some(*t),
                _ => None,
            })
            .min();
        let target = stops.iter().find_map(|s| match s {
            StopCondition::Delivered(n) => Some(*n),
            _ => None,
        });

        loop {
            if self.model.halted() {
                break;
            }
            if let Some(n) = target {
                if self.model.delivered() >= n {
                    break;
                }
            }
            let Some(next) = self.sched.peek_time() else {
                break;
            };
            if let Some(limit) = max_time {
                if next > limit {
                    self.sched.advance_to(limit);
                    break;
                }
            }
            let event = self.sched.pop().expect("peeked event vanished");
            if let Some(log) = self.log.as_mut() {
                log.push((event.fire_at, event.seq_id));
            }
            self.model.handle(&mut self.sched, event);
        }
        self.sched.now()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Recorder {
        fired: Vec<(SimTime, &'static str)>,
    }

    impl Model for Recorder {
        type Payload = &'static str;
        fn handle(&mut self, _s: &mut Scheduler<&'static str>, e: Event<&'static str>) {
            self.fired.push((e.fire_at, e.payload));
        }
        fn delivered(&self) -> u64 {
            self.fired.len() as u64
        }
    }

    #[test]
    fn ties_fire_in_insertion_order() {
        let mut sim = Simulation::new(Recorder::default());
        sim.sched.schedule(SimTime::from_micros(5), "a");
        sim.sched.schedule(SimTime::from_micros(5), "b");
        sim.run_until(&[StopCondition::QueueEmpty]);
        assert_eq!(
            sim.model.fired.iter().map(|f| f.1).collect::<Vec<_>>(),
            ["a", "b"]
        );
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut sim = Simulation::new(Recorder::default());
        let h = sim.sched.schedule(SimTime::from_micros(3), "x");
        assert!(sim.sched.cancel(h));
        assert!(!sim.sched.cancel(h));
        sim.run_until(&[StopCondition::QueueEmpty]);
        assert!(sim.model.fired.is_empty());
        assert_eq!(sim.sched.cancelled(), 1);
    }

    #[test]
    fn cancel_after_fire_is_false() {
        let mut sim = Simulation::new(Recorder::default());
        let h = sim.sched.schedule(SimTime::from_micros(1), "x");
        sim.run_until(&[StopCondition::QueueEmpty]);
        assert!(!sim.sched.cancel(h));
    }

    #[test]
    #[should_panic(expected = "event in past")]
    fn scheduling_in_past_aborts() {
        let mut sim = Simulation::new(Recorder::default());
        sim.sched.schedule(SimTime::from_micros(4), "x");
        sim.run_until(&[StopCondition::QueueEmpty]);
        sim.sched.schedule(SimTime::from_micros(2), "y");
    }

    #[test]
    fn empty_queue_returns_zero() {
        let mut sim = Simulation::new(Recorder::default());
        assert_eq!(sim.run_until(&[StopCondition::QueueEmpty]), SimTime::ZERO);
    }

    #[test]
    fn max_time_bounds_dispatch() {
        let mut sim = Simulation::new(Recorder::default());
        for (t, p) in [(1, "a"), (2, "b"), (3, "c")] {
            sim.sched.schedule(SimTime::from_micros(t), p);
        }
        let end = sim.run_until(&[StopCondition::MaxTime(SimTime::from_micros(2))]);
        assert_eq!(sim.model.fired.len(), 2);
        assert_eq!(end, SimTime::from_micros(2));
        assert_eq!(sim.sched.pending_len(), 1);
    }

    #[test]
    fn max_time_advances_idle_clock() {
        let mut sim = Simulation::new(Recorder::default());
        sim.sched.schedule(SimTime::from_micros(1), "a");
        sim.sched.schedule(SimTime::from_micros(50), "b");
        let end = sim.run_until(&[StopCondition::MaxTime(SimTime::from_micros(10))]);
        assert_eq!(end, SimTime::from_micros(10));
    }

    #[test]
    fn delivered_target_stops_early() {
        let mut sim = Simulation::new(Recorder::default());
        for t in 1..=10 {
            sim.sched.schedule(SimTime::from_micros(t), "e");
        }
        let end = sim.run_until(&[
            StopCondition::Delivered(4),
            StopCondition::MaxTime(SimTime::MAX),
        ]);
        assert_eq!(end, SimTime::from_micros(4));
    }

    #[test]
    fn display_is_exact_millis() {
        assert_eq!(SimTime::from_micros(12_345).to_string(), "12.345");
        assert_eq!(SimTime::from_millis_f64(0.5).to_string(), "0.500");
    }

    #[derive(Default)]
    struct Chain {
        fired: u64,
    }

    impl Model for Chain {
        type Payload = u64;
        fn handle(&mut self, s: &mut Scheduler<u64>, e: Event<u64>) {
            self.fired += 1;
            if e.payload > 0 {
                let delay = SimTime::from_micros(e.payload % 7);
                s.schedule_in(delay, e.payload - 1);
                s.schedule_in(delay, e.payload / 2);
            }
        }
    }

    #[test]
    fn no_lost_events_and_monotone_clock() {
        let mut sim = Simulation::new(Chain::default()).with_dispatch_log();
        sim.sched.schedule(SimTime::ZERO, 12);
        sim.run_until(&[StopCondition::QueueEmpty]);
        let log = sim.dispatch_log().unwrap();
        assert!(log.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            sim.sched.scheduled(),
            sim.sched.dispatched() + sim.sched.cancelled()
        );
        assert_eq!(sim.model.fired, sim.sched.dispatched());
    }
}
