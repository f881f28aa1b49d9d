//! Wires source, path and sink onto the event engine and runs a scenario.

use std::fs::File;
use std::io::BufWriter;

use crate::engine::{Event, EventHandle, Model, Scheduler, SimTime, Simulation};
use crate::error::{Error, Result};
use crate::metrics::{write_metrics_csv, Metrics};
use crate::path::{Arrival, ForwardOutcome, LossPlan, NetPath, Packet, Router, RouterItem};
use crate::rng::{streams, RngStream};
use crate::scenario::ScenarioConfig;
use crate::sink::{Disposition, Sink};
use crate::source::{Source, SourceConfig, SourceContext};
use crate::trace::{write_trace_csv, Node, TraceEvent, TraceRecord, Tracer};

#[derive(Clone, Debug)]
pub enum Payload {
    SendOpportunity,
    Timer(u64),
    ForcedExpiry,
    AckArrival(Packet),
    RouterArrival(Packet),
    RouterDeparture,
    CrossArrival,
    SinkArrival(Packet),
}

impl Payload {
    pub fn target(&self) -> Node {
        match self {
            Payload::SendOpportunity
            | Payload::Timer(_)
            | Payload::ForcedExpiry
            | Payload::AckArrival(_) => Node::Src,
            Payload::RouterArrival(_) | Payload::RouterDeparture | Payload::CrossArrival => {
                Node::Rtr
            }
            Payload::SinkArrival(_) => Node::Snk,
        }
    }
}

/// Source-side view of the world handed to [`Source`] operations.
struct SourceCtx<'a> {
    sched: &'a mut Scheduler<Payload>,
    path: &'a mut NetPath,
    tracer: &'a mut Tracer,
}

impl SourceContext for SourceCtx<'_> {
    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn transmit(&mut self, pkt: Packet) {
        let now = self.sched.now();
        let ev = if pkt.is_retransmission() {
            TraceEvent::Retransmit
        } else {
            TraceEvent::Send
        };
        self.tracer
            .record(now, Node::Src, ev, pkt.seq, pkt.attempt, String::new);
        match self.path.send_forward(&pkt, now) {
            ForwardOutcome::InFlight { router_at } => {
                self.sched.schedule(router_at, Payload::RouterArrival(pkt));
            }
            ForwardOutcome::Dropped(reason) => {
                let ev = match reason {
                    crate::path::DropReason::Forced => TraceEvent::DropForced,
                    _ => TraceEvent::DropRandom,
                };
                self.tracer
                    .record(now, Node::Rtr, ev, pkt.seq, pkt.attempt, String::new);
            }
        }
    }

    fn arm_timer(&mut self, seq: u64, at: SimTime) -> EventHandle {
        self.tracer.record(
            self.sched.now(),
            Node::Src,
            TraceEvent::TimerSet,
            seq,
            0,
            || format!("at={at}"),
        );
        self.sched.schedule(at, Payload::Timer(seq))
    }

    fn disarm_timer(&mut self, handle: EventHandle) -> bool {
        self.sched.cancel(handle)
    }

    fn rtt_sampled(&mut self, seq: u64, sample: SimTime, srtt_us: f64, rto_us: f64) {
        self.tracer.record(
            self.sched.now(),
            Node::Src,
            TraceEvent::RttUpdate,
            seq,
            0,
            || {
                format!(
                    "sample={sample};srtt={:.3};rto={:.3}",
                    srtt_us / 1e3,
                    rto_us / 1e3
                )
            },
        );
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct SinkCounters {
    duplicates: u64,
    out_of_order: u64,
    cache_full: u64,
}

pub struct World {
    source: Source,
    sink: Sink,
    path: NetPath,
    tracer: Tracer,
    cross: Option<(RngStream, f64)>,
    opportunity_at: Option<SimTime>,
    delivery_times: Vec<SimTime>,
    sink_counters: SinkCounters,
    check: bool,
    error: Option<Error>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let source = Source::new(SourceConfig {
            policy: cfg.scheme.source,
            window: cfg.window,
            total: cfg.packets,
            gen_interval: cfg.gen_interval,
            timer: cfg.timer,
        });
        let path = NetPath::new(
            cfg.link,
            Router::new(cfg.buffer, cfg.service_time),
            LossPlan::new(cfg.forced_drops.iter().copied(), cfg.loss_p, cfg.seed),
            cfg.seed,
        );
        Self {
            source,
            sink: Sink::new(cfg.sink_policy()),
            path,
            tracer: Tracer::new(cfg.trace),
            cross: cfg.cross_interarrival.map(|m| {
                (
                    RngStream::new(cfg.seed, streams::CROSS_TRAFFIC),
                    m.as_micros() as f64,
                )
            }),
            opportunity_at: None,
            delivery_times: Vec::with_capacity(cfg.packets as usize),
            sink_counters: SinkCounters::default(),
            check: cfg.check_invariants,
            error: None,
        }
    }

    pub fn source(&self) -> &Source {
        &self.source
    }
    pub fn sink(&self) -> &Sink {
        &self.sink
    }
    pub fn path(&self) -> &NetPath {
        &self.path
    }

    fn start(&mut self, sched: &mut Scheduler<Payload>, cfg: &ScenarioConfig) {
        sched.schedule(SimTime::ZERO, Payload::SendOpportunity);
        self.opportunity_at = Some(SimTime::ZERO);
        for &t in &cfg.forced_expiries {
            sched.schedule(t, Payload::ForcedExpiry);
        }
        self.schedule_cross(sched);
    }

    fn schedule_cross(&mut self, sched: &mut Scheduler<Payload>) {
        if let Some((rng, mean_us)) = self.cross.as_mut() {
            let gap = rng.exponential(*mean_us).round().max(1.0) as u64;
            sched.schedule_in(SimTime::from_micros(gap), Payload::CrossArrival);
        }
    }

    fn ctx<'a>(
        sched: &'a mut Scheduler<Payload>,
        path: &'a mut NetPath,
        tracer: &'a mut Tracer,
    ) -> SourceCtx<'a> {
        SourceCtx {
            sched,
            path,
            tracer,
        }
    }

    fn arm_opportunity(&mut self, sched: &mut Scheduler<Payload>) {
        if let Some(at) = self.source.next_data_at(sched.now()) {
            if self.opportunity_at != Some(at) {
                sched.schedule(at, Payload::SendOpportunity);
                self.opportunity_at = Some(at);
            }
        }
    }

    fn on_router_arrival(
        &mut self,
        sched: &mut Scheduler<Payload>,
        arrival: Arrival,
        seq: u64,
        attempt: u32,
    ) {
        let now = sched.now();
        match arrival {
            Arrival::Started { departs_at } => {
                sched.schedule(departs_at, Payload::RouterDeparture);
                if seq > 0 {
                    self.tracer
                        .record(now, Node::Rtr, TraceEvent::Enqueue, seq, attempt, || {
                            "q=0".into()
                        });
                }
            }
            Arrival::Queued { queue_len } => {
                if seq > 0 {
                    self.tracer
                        .record(now, Node::Rtr, TraceEvent::Enqueue, seq, attempt, || {
                            format!("q={queue_len}")
                        });
                }
            }
            Arrival::Dropped => {
                if seq > 0 {
                    let q = self.path.router.queue_len();
                    self.tracer.record(
                        now,
                        Node::Rtr,
                        TraceEvent::DropOverflow,
                        seq,
                        attempt,
                        || format!("q={q}"),
                    );
                }
            }
        }
    }

    fn on_sink_arrival(&mut self, sched: &mut Scheduler<Payload>, pkt: Packet) {
        let now = sched.now();
        self.path.sink_arrival();
        let out = self.sink.on_data(pkt.seq);
        let ev = match out.disposition {
            Disposition::Delivered => TraceEvent::Delivered,
            Disposition::Cached => TraceEvent::Cached,
            Disposition::DroppedOutOfOrder => {
                self.sink_counters.out_of_order += 1;
                TraceEvent::DroppedOutOfOrder
            }
            Disposition::DroppedDuplicate => {
                self.sink_counters.duplicates += 1;
                TraceEvent::DroppedDuplicate
            }
            Disposition::DroppedCacheFull => {
                self.sink_counters.cache_full += 1;
                TraceEvent::DroppedCacheFull
            }
        };
        self.delivery_times
            .extend(out.delivered_now.iter().map(|_| now));
        let cache_len = self.sink.cache().len();
        self.tracer
            .record(now, Node::Snk, ev, pkt.seq, pkt.attempt, || {
                match out.delivered_now.as_slice() {
                    [] => format!("cache={cache_len}"),
                    [one] => format!("run={one};cache={cache_len}"),
                    [first, .., last] => format!("run={first}-{last};cache={cache_len}"),
                }
            });
        let ack = Packet::ack(out.ack, now);
        self.tracer
            .record(now, Node::Snk, TraceEvent::AckTx, out.ack, 1, || {
                format!("ack={}", out.ack)
            });
        match self.path.send_reverse(&ack, now) {
            Some(at) => {
                sched.schedule(at, Payload::AckArrival(ack));
            }
            None => {
                self.tracer
                    .record(now, Node::Snk, TraceEvent::AckLost, out.ack, 1, String::new)
            }
        }
    }

    fn verify(&self, sched: &Scheduler<Payload>) -> Result<(), String> {
        self.source.check_invariants()?;
        self.sink.check_invariants()?;
        self.path.check_conservation()?;
        if let Some((seq, _)) = self
            .source
            .timers()
            .iter()
            .find(|(_, h)| !sched.is_pending(**h))
        {
            return Err(format!("unacked packet {seq} has no live timer"));
        }
        if self.source.last_acked() > self.sink.expected() - 1 {
            return Err("source saw an ack beyond the delivered prefix".into());
        }
        if self.path.router.queue_len() > self.path.router.capacity() {
            return Err("router queue over capacity".into());
        }
        Ok(())
    }

    fn sink_dispositions(&self) -> SinkCounters {
        self.sink_counters
    }

    pub fn metrics(&self, cfg: &ScenarioConfig, end: SimTime) -> Metrics {
        let duration_s = end.as_micros() as f64 / 1e6;
        let half = SimTime::from_micros(end.as_micros() / 2);
        let first = self.delivery_times.iter().filter(|&&t| t < half).count() as f64;
        let second = self.delivery_times.len() as f64 - first;
        let rate = |n: f64, secs: f64| if secs > 0.0 { n / secs } else { 0.0 };
        let sc = self.sink_dispositions();
        let delivered = self.sink.delivered().len() as u64;
        let est = self.source.estimator();
        Metrics {
            scheme: cfg.scheme.label().to_string(),
            seed: cfg.seed,
            sim_duration: end.as_millis_f64(),
            delivered,
            completed: delivered == cfg.packets,
            data_transmissions_total: self.source.transmissions(),
            retransmissions: self.source.retransmissions(),
            timeout_events: self.source.timeout_events(),
            duplicates_at_sink: sc.duplicates,
            out_of_order_drops: sc.out_of_order,
            cache_full_drops: sc.cache_full,
            overflow_drops: self.path.counters.overflow_drops,
            forced_drops: self.path.counters.forced_drops,
            random_drops: self.path.counters.random_drops,
            goodput: rate(delivered as f64, duration_s),
            goodput_first_half: rate(first, duration_s / 2.0),
            goodput_second_half: rate(second, duration_s / 2.0),
            initial_rto: (cfg.timer.beta * cfg.timer.initial_srtt.as_micros() as f64).clamp(
                cfg.timer.rto_min.as_micros() as f64,
                cfg.timer.rto_max.as_micros() as f64,
            ) / 1e3,
            final_srtt: est.srtt_us() / 1e3,
            final_rto: est.rto_us() / 1e3,
            peak_cache_occupancy: self.sink.peak_cache(),
            transmit_counts: self.source.transmit_counts().to_vec(),
        }
    }
}

impl Model for World {
    type Payload = Payload;

    fn handle(&mut self, sched: &mut Scheduler<Payload>, event: Event<Payload>) {
        let now = sched.now();
        match event.payload {
            Payload::SendOpportunity => {
                if self.opportunity_at == Some(now) {
                    self.opportunity_at = None;
                }
                let mut ctx = Self::ctx(sched, &mut self.path, &mut self.tracer);
                self.source.try_send_new(&mut ctx);
                self.arm_opportunity(sched);
            }
            Payload::Timer(seq) => {
                let rto = self.source.estimator().rto();
                let attempt = self.source.attempts(seq);
                self.tracer
                    .record(now, Node::Src, TraceEvent::TimerFired, seq, attempt, || {
                        format!("rto={rto}")
                    });
                let mut ctx = Self::ctx(sched, &mut self.path, &mut self.tracer);
                self.source.on_timer_expiry(&mut ctx, seq);
            }
            Payload::ForcedExpiry => {
                let seq = self.source.unacked().first().copied().unwrap_or(0);
                self.tracer.record(
                    now,
                    Node::Src,
                    TraceEvent::ForcedExpiry,
                    seq,
                    0,
                    String::new,
                );
                let mut ctx = Self::ctx(sched, &mut self.path, &mut self.tracer);
                self.source.force_expiry(&mut ctx);
            }
            Payload::AckArrival(ack) => {
                let n = ack.seq.saturating_sub(self.source.last_acked());
                self.tracer
                    .record(now, Node::Src, TraceEvent::AckRx, ack.seq, 1, || {
                        format!("newly_acked={n}")
                    });
                let mut ctx = Self::ctx(sched, &mut self.path, &mut self.tracer);
                if let Err(source) = self.source.on_ack(&mut ctx, ack.seq) {
                    self.error = Some(Error::Protocol { time: now, source });
                    return;
                }
                self.arm_opportunity(sched);
            }
            Payload::RouterArrival(pkt) => {
                let (seq, attempt) = (pkt.seq, pkt.attempt);
                let arrival = self.path.router_arrival(pkt, now);
                self.on_router_arrival(sched, arrival, seq, attempt);
            }
            Payload::CrossArrival => {
                let arrival = self.path.cross_arrival(now);
                self.on_router_arrival(sched, arrival, 0, 0);
                self.schedule_cross(sched);
            }
            Payload::RouterDeparture => {
                let (item, sink_at, next) = self.path.router_dequeue_next(now);
                if let Some(t) = next {
                    sched.schedule(t, Payload::RouterDeparture);
                }
                if let (RouterItem::Data(pkt), Some(at)) = (item, sink_at) {
                    self.tracer.record(
                        now,
                        Node::Rtr,
                        TraceEvent::Depart,
                        pkt.seq,
                        pkt.attempt,
                        String::new,
                    );
                    sched.schedule(at, Payload::SinkArrival(pkt));
                }
            }
            Payload::SinkArrival(pkt) => self.on_sink_arrival(sched, pkt),
        }
        if self.check {
            if let Err(reason) = self.verify(sched) {
                self.error = Some(Error::Invariant { time: now, reason });
            }
        }
    }

    fn delivered(&self) -> u64 {
        self.sink.delivered().len() as u64
    }

    fn halted(&self) -> bool {
        self.error.is_some()
    }
}

/// Everything a run produces.
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Option<Vec<TraceRecord>>,
    pub world: World,
    pub end: SimTime,
}

/// Runs the scenario in memory without touching the filesystem.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut sim = Simulation::new(World::new(cfg));
    sim.model.start(&mut sim.sched, cfg);
    let end = sim.run_until(&cfg.stop_conditions());
    if let Some(err) = sim.model.error.take() {
        return Err(err);
    }
    let metrics = sim.model.metrics(cfg, end);
    let mut world = sim.model;
    let trace = std::mem::take(&mut world.tracer).into_rows();
    Ok(RunOutput {
        metrics,
        trace,
        world,
        end,
    })
}

/// Runs the scenario and writes the metrics and trace CSVs named in the
/// config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let out = simulate(cfg)?;
    if let Some(path) = &cfg.metrics_out {
        write_metrics_csv(BufWriter::new(File::create(path)?), [&out.metrics])?;
    }
    if let (Some(path), Some(rows)) = (&cfg.trace_out, &out.trace) {
        write_trace_csv(
            BufWriter::new(File::create(path)?),
            rows,
            cfg.scheme.label(),
        )?;
    }
    Ok(out)
}
