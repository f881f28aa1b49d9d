//! Sending endpoint: fixed window, per-packet retransmission timers, a
//! smoothed round-trip estimator and the optimistic/pessimistic
//! retransmission policies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::{EventHandle, SimTime};
use crate::path::Packet;

/// What the source does when a retransmission timer expires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourcePolicy {
    /// Resend only the packet whose timer expired.
    Optimistic,
    /// Resend every unacknowledged packet (go-back-N).
    Pessimistic,
}

impl fmt::Display for SourcePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourcePolicy::Optimistic => "optimistic",
            SourcePolicy::Pessimistic => "pessimistic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimerParams {
    /// Weight kept on the previous estimate.
    pub alpha: f64,
    /// Timeout multiplier on the smoothed estimate.
    pub beta: f64,
    pub rto_min: SimTime,
    pub rto_max: SimTime,
    pub initial_srtt: SimTime,
    /// Double the timeout on every expiry. Off by default.
    pub backoff: bool,
}

impl Default for TimerParams {
    fn default() -> Self {
        Self {
            alpha: 0.875,
            beta: 2.0,
            rto_min: SimTime::from_millis(1),
            rto_max: SimTime::from_millis(1_000_000_000),
            initial_srtt: SimTime::from_millis(100),
            backoff: false,
        }
    }
}

impl TimerParams {
    /// Growth factor of the smoothed estimate when every sample arrives one
    /// full timeout late. Above 1 the estimator diverges.
    pub fn late_sample_gain(&self) -> f64 {
        self.alpha + self.beta * (1.0 - self.alpha)
    }
}

/// Exponentially weighted round-trip estimator, `rto = beta * srtt`.
///
/// Kept in floating-point microseconds; only timer deadlines are rounded
/// onto the integer clock.
#[derive(Clone, Debug)]
pub struct RttEstimator {
    params: TimerParams,
    srtt_us: f64,
    rto_us: f64,
}

impl RttEstimator {
    pub fn new(params: TimerParams) -> Self {
        let srtt_us = params.initial_srtt.as_micros() as f64;
        let mut est = Self {
            params,
            srtt_us,
            rto_us: 0.0,
        };
        est.rto_us = est.clamp_rto(params.beta * srtt_us);
        est
    }

    fn clamp_rto(&self, rto_us: f64) -> f64 {
        rto_us.clamp(
            self.params.rto_min.as_micros() as f64,
            self.params.rto_max.as_micros() as f64,
        )
    }

    /// Folds in one sample (microseconds) and returns the new `(srtt, rto)`.
    pub fn update(&mut self, sample_us: f64) -> (f64, f64) {
        debug_assert!(sample_us > 0.0);
        let a = self.params.alpha;
        self.srtt_us = a * self.srtt_us + (1.0 - a) * sample_us;
        self.rto_us = self.clamp_rto(self.params.beta * self.srtt_us);
        (self.srtt_us, self.rto_us)
    }

    pub fn back_off(&mut self) {
        self.rto_us = self.clamp_rto(2.0 * self.rto_us);
    }

    pub fn srtt_us(&self) -> f64 {
        self.srtt_us
    }

    pub fn rto_us(&self) -> f64 {
        self.rto_us
    }

    pub fn rto(&self) -> SimTime {
        SimTime::from_micros(self.rto_us.round() as u64)
    }

    pub fn params(&self) -> &TimerParams {
        &self.params
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("protocol violation: ack {ack} for unsent data (next new seq {next_new_seq})")]
    AckBeyondSent { ack: u64, next_new_seq: u64 },
}

/// The environment a source acts on: the clock, the forward path and the
/// timer queue.
pub trait SourceContext {
    fn now(&self) -> SimTime;
    fn transmit(&mut self, pkt: Packet);
    fn arm_timer(&mut self, seq: u64, at: SimTime) -> EventHandle;
    fn disarm_timer(&mut self, handle: EventHandle) -> bool;
    /// Observation hook for each RTT sample.
    fn rtt_sampled(&mut self, _seq: u64, _sample: SimTime, _srtt_us: f64, _rto_us: f64) {}
}

#[derive(Clone, Debug)]
pub struct SourceConfig {
    pub policy: SourcePolicy,
    pub window: usize,
    pub total: u64,
    /// Spacing at which the application makes packets available; zero means
    /// all data is available at time zero.
    pub gen_interval: SimTime,
    pub timer: TimerParams,
}

#[derive(Clone, Debug)]
pub struct Source {
    cfg: SourceConfig,
    next_new_seq: u64,
    last_acked: u64,
    unacked: BTreeSet<u64>,
    timers: BTreeMap<u64, EventHandle>,
    /// Indexed by sequence number; slot 0 unused.
    attempts: Vec<u32>,
    first_sent: Vec<SimTime>,
    estimator: RttEstimator,
    timeout_events: u64,
    transmissions: u64,
}

impl Source {
    pub fn new(cfg: SourceConfig) -> Self {
        assert!(cfg.window >= 1 && cfg.total >= 1);
        let n = cfg.total as usize + 1;
        Self {
            estimator: RttEstimator::new(cfg.timer),
            cfg,
            next_new_seq: 1,
            last_acked: 0,
            unacked: BTreeSet::new(),
            timers: BTreeMap::new(),
            attempts: vec![0; n],
            first_sent: vec![SimTime::ZERO; n],
            timeout_events: 0,
            transmissions: 0,
        }
    }

    pub fn policy(&self) -> SourcePolicy {
        self.cfg.policy
    }
    pub fn window(&self) -> usize {
        self.cfg.window
    }
    pub fn next_new_seq(&self) -> u64 {
        self.next_new_seq
    }
    pub fn last_acked(&self) -> u64 {
        self.last_acked
    }
    pub fn unacked(&self) -> &BTreeSet<u64> {
        &self.unacked
    }
    pub fn timers(&self) -> &BTreeMap<u64, EventHandle> {
        &self.timers
    }
    pub fn estimator(&self) -> &RttEstimator {
        &self.estimator
    }
    pub fn timeout_events(&self) -> u64 {
        self.timeout_events
    }
    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }
    pub fn retransmissions(&self) -> u64 {
        self.transmissions - (self.next_new_seq - 1)
    }
    pub fn attempts(&self, seq: u64) -> u32 {
        self.attempts[seq as usize]
    }
    /// Transmission count per sequence number, starting at seq 1.
    pub fn transmit_counts(&self) -> &[u32] {
        &self.attempts[1..]
    }

    fn created_at(&self, seq: u64) -> SimTime {
        SimTime::from_micros(self.cfg.gen_interval.as_micros() * (seq - 1))
    }

    /// When the window has room but the next packet has not been generated
    /// yet, the time it becomes available.
    pub fn next_data_at(&self, now: SimTime) -> Option<SimTime> {
        if self.unacked.len() < self.cfg.window && self.next_new_seq <= self.cfg.total {
            let at = self.created_at(self.next_new_seq);
            (at > now).then_some(at)
        } else {
            None
        }
    }

    fn emit(&mut self, ctx: &mut impl SourceContext, seq: u64) {
        let now = ctx.now();
        let i = seq as usize;
        self.attempts[i] += 1;
        if self.attempts[i] == 1 {
            self.first_sent[i] = now;
        }
        self.transmissions += 1;
        let pkt = Packet::data(
            seq,
            self.attempts[i],
            self.created_at(seq),
            self.first_sent[i],
            now,
        );
        ctx.transmit(pkt);
        if let Some(old) = self.timers.remove(&seq) {
            ctx.disarm_timer(old);
        }
        let handle = ctx.arm_timer(seq, now.saturating_add(self.estimator.rto()));
        self.timers.insert(seq, handle);
    }

    /// Sends fresh packets while the window and the application allow.
    pub fn try_send_new(&mut self, ctx: &mut impl SourceContext) -> Vec<u64> {
        let now = ctx.now();
        let mut sent = Vec::new();
        while self.unacked.len() < self.cfg.window
            && self.next_new_seq <= self.cfg.total
            && self.created_at(self.next_new_seq) <= now
        {
            let seq = self.next_new_seq;
            self.next_new_seq += 1;
            self.unacked.insert(seq);
            self.emit(ctx, seq);
            sent.push(seq);
        }
        sent
    }

    /// Handles the expiry of `seq`'s timer. Returns the retransmitted
    /// sequence numbers; empty if `seq` was already acknowledged.
    pub fn on_timer_expiry(&mut self, ctx: &mut impl SourceContext, seq: u64) -> Vec<u64> {
        if !self.unacked.contains(&seq) {
            return Vec::new();
        }
        self.timeout_events += 1;
        if self.cfg.timer.backoff {
            self.estimator.back_off();
        }
        let resend: Vec<u64> = match self.cfg.policy {
            SourcePolicy::Optimistic => vec![seq],
            SourcePolicy::Pessimistic => self.unacked.iter().copied().collect(),
        };
        for &s in &resend {
            self.emit(ctx, s);
        }
        resend
    }

    /// Harness-induced expiry of the oldest outstanding packet's timer.
    pub fn force_expiry(&mut self, ctx: &mut impl SourceContext) -> Vec<u64> {
        match self.unacked.first() {
            Some(&seq) => self.on_timer_expiry(ctx, seq),
            None => Vec::new(),
        }
    }

    /// Processes a cumulative ack. Returns the newly acknowledged sequence
    /// numbers; duplicates return an empty list. New data is sent as the
    /// window slides.
    pub fn on_ack(
        &mut self,
        ctx: &mut impl SourceContext,
        ack_num: u64,
    ) -> Result<Vec<u64>, SourceError> {
        if ack_num <= self.last_acked {
            return Ok(Vec::new());
        }
        if ack_num >= self.next_new_seq {
            return Err(SourceError::AckBeyondSent {
                ack: ack_num,
                next_new_seq: self.next_new_seq,
            });
        }
        let now = ctx.now();
        let newly: Vec<u64> = self.unacked.range(..=ack_num).copied().collect();
        for &seq in &newly {
            self.unacked.remove(&seq);
            if let Some(h) = self.timers.remove(&seq) {
                ctx.disarm_timer(h);
            }
            // Measured from the first transmission, retransmitted or not.
            let sample = now - self.first_sent[seq as usize];
            let sample_us = sample.as_micros().max(1) as f64;
            let (srtt, rto) = self.estimator.update(sample_us);
            ctx.rtt_sampled(seq, sample, srtt, rto);
        }
        self.last_acked = ack_num;
        self.try_send_new(ctx);
        Ok(newly)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.unacked.len() > self.cfg.window {
            return Err(format!(
                "window exceeded: {} > {}",
                self.unacked.len(),
                self.cfg.window
            ));
        }
        if let Some(&lo) = self.unacked.first() {
            if lo <= self.last_acked {
                return Err(format!("unacked {lo} <= last_acked {}", self.last_acked));
            }
        }
        if !self.timers.keys().eq(self.unacked.iter()) {
            return Err("timer set differs from unacked set".into());
        }
        let p = self.estimator.params();
        let rto = self.estimator.rto_us();
        if !(self.estimator.srtt_us() > 0.0
            && rto >= p.rto_min.as_micros() as f64
            && rto <= p.rto_max.as_micros() as f64)
        {
            return Err(format!(
                "estimator out of range: srtt {} rto {rto}",
                self.estimator.srtt_us()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Records transmissions and keeps its own notion of live timers.
    #[derive(Default)]
    struct Bench {
        now: SimTime,
        sent: Vec<Packet>,
        next_handle: u64,
        live: BTreeMap<u64, (u64, SimTime)>,
    }

    impl SourceContext for Bench {
        fn now(&self) -> SimTime {
            self.now
        }
        fn transmit(&mut self, pkt: Packet) {
            self.sent.push(pkt);
        }
        fn arm_timer(&mut self, seq: u64, at: SimTime) -> EventHandle {
            self.next_handle += 1;
            self.live.insert(self.next_handle, (seq, at));
            handle(self.next_handle)
        }
        fn disarm_timer(&mut self, h: EventHandle) -> bool {
            self.live.remove(&handle_id(h)).is_some()
        }
    }

    fn handle(id: u64) -> EventHandle {
        EventHandle::from_raw(id)
    }

    fn handle_id(h: EventHandle) -> u64 {
        h.raw()
    }

    fn source(policy: SourcePolicy, window: usize, total: u64) -> Source {
        Source::new(SourceConfig {
            policy,
            window,
            total,
            gen_interval: SimTime::ZERO,
            timer: TimerParams::default(),
        })
    }

    fn seqs(b: &Bench) -> Vec<u64> {
        b.sent.iter().map(|p| p.seq).collect()
    }

    #[test]
    fn fills_window_then_slides() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 4, 10);
        assert_eq!(s.try_send_new(&mut b), vec![1, 2, 3, 4]);
        b.now = SimTime::from_millis(30);
        assert_eq!(s.on_ack(&mut b, 1).unwrap(), vec![1]);
        assert_eq!(seqs(&b), vec![1, 2, 3, 4, 5]);
        assert_eq!(
            s.unacked().iter().copied().collect::<Vec<_>>(),
            vec![2, 3, 4, 5]
        );
        s.check_invariants().unwrap();
    }

    #[test]
    fn window_of_one_is_stop_and_wait() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 1, 3);
        assert_eq!(s.try_send_new(&mut b), vec![1]);
        assert!(s.try_send_new(&mut b).is_empty());
        b.now = SimTime::from_millis(5);
        s.on_ack(&mut b, 1).unwrap();
        assert_eq!(s.unacked().len(), 1);
    }

    #[test]
    fn optimistic_resends_one() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 4, 10);
        s.try_send_new(&mut b);
        b.now = SimTime::from_millis(200);
        assert_eq!(s.on_timer_expiry(&mut b, 1), vec![1]);
        assert_eq!(b.sent.last().unwrap().attempt, 2);
        assert_eq!(s.timeout_events(), 1);
        assert_eq!(b.live.len(), 4);
        s.check_invariants().unwrap();
    }

    #[test]
    fn pessimistic_resends_all_in_order() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Pessimistic, 4, 10);
        s.try_send_new(&mut b);
        b.now = SimTime::from_millis(200);
        assert_eq!(s.on_timer_expiry(&mut b, 1), vec![1, 2, 3, 4]);
        assert!(b.sent[4..].iter().all(|p| p.attempt == 2));
        // one live timer per unacked packet, all restarted now
        assert_eq!(b.live.len(), 4);
        assert!(b
            .live
            .values()
            .all(|&(_, at)| at == SimTime::from_millis(400)));
    }

    #[test]
    fn stale_expiry_is_noop() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Pessimistic, 4, 4);
        s.try_send_new(&mut b);
        b.now = SimTime::from_millis(50);
        assert_eq!(s.on_ack(&mut b, 4).unwrap(), vec![1, 2, 3, 4]);
        assert!(s.on_timer_expiry(&mut b, 1).is_empty());
        assert_eq!(s.timeout_events(), 0);
        assert!(b.live.is_empty());
    }

    #[test]
    fn cumulative_ack_reopens_window() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 4, 4);
        s.try_send_new(&mut b);
        b.now = SimTime::from_millis(50);
        assert_eq!(s.on_ack(&mut b, 4).unwrap(), vec![1, 2, 3, 4]);
        assert!(s.unacked().is_empty());
    }

    #[test]
    fn duplicate_ack_changes_nothing() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 4, 10);
        s.try_send_new(&mut b);
        let before = s.estimator().srtt_us();
        assert!(s.on_ack(&mut b, 0).unwrap().is_empty());
        assert_eq!(s.unacked().len(), 4);
        assert_eq!(s.estimator().srtt_us(), before);
    }

    #[test]
    fn ack_beyond_sent_is_violation() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 4, 10);
        s.try_send_new(&mut b);
        assert_eq!(
            s.on_ack(&mut b, 5),
            Err(SourceError::AckBeyondSent {
                ack: 5,
                next_new_seq: 5
            })
        );
    }

    #[test]
    fn samples_measured_from_first_send() {
        let mut b = Bench::default();
        let mut s = source(SourcePolicy::Optimistic, 1, 2);
        s.try_send_new(&mut b);
        b.now = SimTime::from_millis(200);
        s.on_timer_expiry(&mut b, 1);
        b.now = SimTime::from_millis(300);
        s.on_ack(&mut b, 1).unwrap();
        // 0.875 * 100 + 0.125 * 300
        assert!((s.estimator().srtt_us() - 125_000.0).abs() < 1e-9);
    }

    #[test]
    fn generation_limits_sending() {
        let mut b = Bench::default();
        let mut s = Source::new(SourceConfig {
            policy: SourcePolicy::Optimistic,
            window: 4,
            total: 10,
            gen_interval: SimTime::from_millis(20),
            timer: TimerParams::default(),
        });
        assert_eq!(s.try_send_new(&mut b), vec![1]);
        assert_eq!(s.next_data_at(b.now), Some(SimTime::from_millis(20)));
        b.now = SimTime::from_millis(45);
        assert_eq!(s.try_send_new(&mut b), vec![2, 3]);
    }

    #[test]
    fn estimator_fixed_point() {
        let mut e = RttEstimator::new(TimerParams::default());
        let (srtt, rto) = e.update(100_000.0);
        assert_eq!((srtt, rto), (100_000.0, 200_000.0));
    }

    #[test]
    fn estimator_single_step() {
        let mut e = RttEstimator::new(TimerParams::default());
        let (srtt, rto) = e.update(300_000.0);
        assert!((srtt - 125_000.0).abs() < 1e-9);
        assert!((rto - 250_000.0).abs() < 1e-9);
    }

    #[test]
    fn estimator_clamps() {
        let params = TimerParams {
            rto_min: SimTime::from_millis(500),
            rto_max: SimTime::from_millis(900),
            ..TimerParams::default()
        };
        let mut e = RttEstimator::new(params);
        assert_eq!(e.rto_us(), 500_000.0);
        e.update(10_000_000.0);
        assert_eq!(e.rto_us(), 900_000.0);
    }

    #[test]
    fn default_gain_diverges() {
        assert!((TimerParams::default().late_sample_gain() - 1.125).abs() < 1e-12);
    }

    #[test]
    fn backoff_doubles() {
        let mut b = Bench::default();
        let mut s = Source::new(SourceConfig {
            policy: SourcePolicy::Optimistic,
            window: 1,
            total: 1,
            gen_interval: SimTime::ZERO,
            timer: TimerParams {
                backoff: true,
                ..TimerParams::default()
            },
        });
        s.try_send_new(&mut b);
        s.on_timer_expiry(&mut b, 1);
        assert_eq!(s.estimator().rto(), SimTime::from_millis(400));
    }
}
