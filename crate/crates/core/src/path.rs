//! The simulated network between source and sink.
//!
//! Forward direction: propagation delay, then a drop-tail FIFO router with a
//! fixed per-packet service time, then a delivery delay to the sink. Acks
//! travel a separate delay line that bypasses the router. The path never
//! reorders packets.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::engine::SimTime;
use crate::rng::{streams, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Ack,
}

/// A data packet or a cumulative ack.
///
/// For acks, `seq` carries the cumulative ack number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketKind,
    pub seq: u64,
    /// Transmission instance, starting at 1.
    pub attempt: u32,
    pub created_at: SimTime,
    pub first_sent_at: SimTime,
    pub this_sent_at: SimTime,
    pub size: u32,
}

impl Packet {
    pub fn data(
        seq: u64,
        attempt: u32,
        created_at: SimTime,
        first_sent_at: SimTime,
        now: SimTime,
    ) -> Self {
        debug_assert!(attempt >= 1 && first_sent_at <= now);
        Packet {
            kind: PacketKind::Data,
            seq,
            attempt,
            created_at,
            first_sent_at,
            this_sent_at: now,
            size: 1,
        }
    }

    pub fn ack(ack_num: u64, now: SimTime) -> Self {
        Packet {
            kind: PacketKind::Ack,
            seq: ack_num,
            attempt: 1,
            created_at: now,
            first_sent_at: now,
            this_sent_at: now,
            size: 1,
        }
    }

    pub fn is_retransmission(&self) -> bool {
        self.attempt > 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    Forced,
    Random,
    Overflow,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Forced => "forced",
            DropReason::Random => "random",
            DropReason::Overflow => "overflow",
        })
    }
}

/// Deterministic and probabilistic loss on the forward path.
#[derive(Clone, Debug)]
pub struct LossPlan {
    forced: BTreeSet<(u64, u32)>,
    bernoulli_p: f64,
    rng: RngStream,
}

impl LossPlan {
    pub fn new(forced: impl IntoIterator<Item = (u64, u32)>, bernoulli_p: f64, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&bernoulli_p),
            "loss probability out of range"
        );
        Self {
            forced: forced.into_iter().collect(),
            bernoulli_p,
            rng: RngStream::new(seed, streams::FORWARD_LOSS),
        }
    }

    pub fn lossless() -> Self {
        Self::new([], 0.0, 0)
    }

    pub fn bernoulli_p(&self) -> f64 {
        self.bernoulli_p
    }

    /// Decides the fate of one forward data transmission. A forced entry is
    /// consumed on use, so it fires at most once.
    pub fn judge(&mut self, seq: u64, attempt: u32) -> Option<DropReason> {
        if self.forced.remove(&(seq, attempt)) {
            Some(DropReason::Forced)
        } else if self.rng.bernoulli(self.bernoulli_p) {
            Some(DropReason::Random)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkConfig {
    pub forward_prop_delay: SimTime,
    pub reverse_prop_delay: SimTime,
    /// Router departure to sink arrival.
    pub delivery_delay: SimTime,
    pub ack_lossless: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            forward_prop_delay: SimTime::from_millis(10),
            reverse_prop_delay: SimTime::from_millis(10),
            delivery_delay: SimTime::ZERO,
            ack_lossless: true,
        }
    }
}

/// What occupies a router slot: one of our data packets or a unit of
/// cross traffic, which is discarded after service.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RouterItem {
    Data(Packet),
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arrival {
    /// Server was idle; service completes at the given time.
    Started { departs_at: SimTime },
    /// Waiting; `queue_len` includes this packet.
    Queued { queue_len: usize },
    /// Queue was full.
    Dropped,
}

/// Drop-tail FIFO router.
///
/// `capacity` bounds the waiting queue; the packet in service is held
/// separately.
#[derive(Clone, Debug)]
pub struct Router {
    capacity: usize,
    service_time: SimTime,
    queue: VecDeque<RouterItem>,
    in_service: Option<RouterItem>,
}

impl Router {
    pub fn new(capacity: usize, service_time: SimTime) -> Self {
        assert!(capacity > 0, "router capacity must be positive");
        Self {
            capacity,
            service_time,
            queue: VecDeque::with_capacity(capacity),
            in_service: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn busy(&self) -> bool {
        self.in_service.is_some()
    }

    /// Data packets held (queued or in service).
    pub fn data_held(&self) -> usize {
        self.queue
            .iter()
            .chain(self.in_service.iter())
            .filter(|i| matches!(i, RouterItem::Data(_)))
            .count()
    }

    pub fn arrive(&mut self, item: RouterItem, now: SimTime) -> Arrival {
        if self.in_service.is_none() {
            debug_assert!(self.queue.is_empty());
            self.in_service = Some(item);
            Arrival::Started {
                departs_at: now + self.service_time,
            }
        } else if self.queue.len() < self.capacity {
            self.queue.push_back(item);
            Arrival::Queued {
                queue_len: self.queue.len(),
            }
        } else {
            Arrival::Dropped
        }
    }

    /// Completes the current service. Returns the departing item and, when
    /// the queue was non-empty, the completion time of the next one.
    pub fn depart(&mut self, now: SimTime) -> (RouterItem, Option<SimTime>) {
        let done = self.in_service.take().expect("departure from idle router");
        let next = self.queue.pop_front().map(|item| {
            self.in_service = Some(item);
            now + self.service_time
        });
        (done, next)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathCounters {
    pub data_sent: u64,
    pub forced_drops: u64,
    pub random_drops: u64,
    pub overflow_drops: u64,
    pub sink_arrivals: u64,
    pub propagating: u64,
    pub delivering: u64,
    pub cross_arrivals: u64,
    pub cross_drops: u64,
    pub acks_sent: u64,
    pub acks_dropped: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOutcome {
    /// Reaches the router at the given time.
    InFlight {
        router_at: SimTime,
    },
    Dropped(DropReason),
}

/// Forward path, router and ack delay line together with their counters.
#[derive(Clone, Debug)]
pub struct NetPath {
    pub link: LinkConfig,
    pub router: Router,
    pub loss: LossPlan,
    ack_rng: RngStream,
    pub counters: PathCounters,
}

impl NetPath {
    pub fn new(link: LinkConfig, router: Router, loss: LossPlan, seed: u64) -> Self {
        Self {
            link,
            router,
            loss,
            ack_rng: RngStream::new(seed, streams::ACK_LOSS),
            counters: PathCounters::default(),
        }
    }

    pub fn send_forward(&mut self, pkt: &Packet, now: SimTime) -> ForwardOutcome {
        assert_eq!(
            pkt.kind,
            PacketKind::Data,
            "send_forward takes data packets"
        );
        self.counters.data_sent += 1;
        match self.loss.judge(pkt.seq, pkt.attempt) {
            Some(reason) => {
                match reason {
                    DropReason::Forced => self.counters.forced_drops += 1,
                    DropReason::Random => self.counters.random_drops += 1,
                    DropReason::Overflow => unreachable!(),
                }
                ForwardOutcome::Dropped(reason)
            }
            None => {
                self.counters.propagating += 1;
                ForwardOutcome::InFlight {
                    router_at: now + self.link.forward_prop_delay,
                }
            }
        }
    }

    /// A data packet reaches the router.
    pub fn router_arrival(&mut self, pkt: Packet, now: SimTime) -> Arrival {
        self.counters.propagating -= 1;
        let arrival = self.router.arrive(RouterItem::Data(pkt), now);
        if arrival == Arrival::Dropped {
            self.counters.overflow_drops += 1;
        }
        arrival
    }

    pub fn cross_arrival(&mut self, now: SimTime) -> Arrival {
        self.counters.cross_arrivals += 1;
        let arrival = self.router.arrive(RouterItem::Cross, now);
        if arrival == Arrival::Dropped {
            self.counters.cross_drops += 1;
        }
        arrival
    }

    /// Service completion. Returns the departed item, when it reaches the
    /// sink (data only), and the next completion time if any.
    pub fn router_dequeue_next(
        &mut self,
        now: SimTime,
    ) -> (RouterItem, Option<SimTime>, Option<SimTime>) {
        let (item, next) = self.router.depart(now);
        let sink_at = match item {
            RouterItem::Data(_) => {
                self.counters.delivering += 1;
                Some(now + self.link.delivery_delay)
            }
            RouterItem::Cross => None,
        };
        (item, sink_at, next)
    }

    pub fn sink_arrival(&mut self) {
        self.counters.delivering -= 1;
        self.counters.sink_arrivals += 1;
    }

    /// Puts an ack on the reverse path; returns its arrival time at the
    /// source, or `None` if it was lost.
    pub fn send_reverse(&mut self, ack: &Packet, now: SimTime) -> Option<SimTime> {
        assert_eq!(ack.kind, PacketKind::Ack, "send_reverse takes acks");
        self.counters.acks_sent += 1;
        if !self.link.ack_lossless && self.ack_rng.bernoulli(self.loss.bernoulli_p()) {
            self.counters.acks_dropped += 1;
            return None;
        }
        Some(now + self.link.reverse_prop_delay)
    }

    pub fn in_flight(&self) -> u64 {
        self.counters.propagating + self.router.data_held() as u64 + self.counters.delivering
    }

    /// sends = sink arrivals + drops + in flight.
    pub fn check_conservation(&self) -> Result<(), String> {
        let c = &self.counters;
        let rhs =
            c.sink_arrivals + c.forced_drops + c.random_drops + c.overflow_drops + self.in_flight();
        if c.data_sent == rhs {
            Ok(())
        } else {
            Err(format!(
                "conservation violated: sent {} != accounted {rhs} ({c:?})",
                c.data_sent
            ))
        }
    }
}
