//! Per-event packet trace.
//!
//! CSV columns: `time_ms,node,event,seq,attempt,detail,scheme`. Rows are
//! appended in dispatch order, so they are ordered by (time, event counter).

use std::fmt;
use std::io;

use crate::engine::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Src,
    Rtr,
    Snk,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Node::Src => "src",
            Node::Rtr => "rtr",
            Node::Snk => "snk",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Send,
    Retransmit,
    TimerSet,
    TimerFired,
    ForcedExpiry,
    AckRx,
    RttUpdate,
    DropForced,
    DropRandom,
    Enqueue,
    DropOverflow,
    Depart,
    Delivered,
    Cached,
    DroppedOutOfOrder,
    DroppedDuplicate,
    DroppedCacheFull,
    AckTx,
    AckLost,
}

impl TraceEvent {
    pub fn name(self) -> &'static str {
        use TraceEvent::*;
        match self {
            Send => "send",
            Retransmit => "retransmit",
            TimerSet => "timer_set",
            TimerFired => "timer_fired",
            ForcedExpiry => "forced_expiry",
            AckRx => "ack_rx",
            RttUpdate => "rtt_update",
            DropForced => "drop_forced",
            DropRandom => "drop_random",
            Enqueue => "enqueue",
            DropOverflow => "drop_overflow",
            Depart => "depart",
            Delivered => "delivered",
            Cached => "cached",
            DroppedOutOfOrder => "dropped_out_of_order",
            DroppedDuplicate => "dropped_duplicate",
            DroppedCacheFull => "dropped_cache_full",
            AckTx => "ack_tx",
            AckLost => "ack_lost",
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: Node,
    pub event: TraceEvent,
    pub seq: u64,
    pub attempt: u32,
    pub detail: String,
}

pub const TRACE_HEADER: [&str; 7] = [
    "time_ms", "node", "event", "seq", "attempt", "detail", "scheme",
];

/// Collects trace rows when enabled; a disabled tracer never formats.
#[derive(Debug, Default)]
pub struct Tracer {
    rows: Option<Vec<TraceRecord>>,
}

impl Tracer {
    pub fn new(enabled: bool) -> Self {
        Self {
            rows: enabled.then(Vec::new),
        }
    }

    pub fn enabled(&self) -> bool {
        self.rows.is_some()
    }

    pub fn record(
        &mut self,
        time: SimTime,
        node: Node,
        event: TraceEvent,
        seq: u64,
        attempt: u32,
        detail: impl FnOnce() -> String,
    ) {
        if let Some(rows) = self.rows.as_mut() {
            rows.push(TraceRecord {
                time,
                node,
                event,
                seq,
                attempt,
                detail: detail(),
            });
        }
    }

    pub fn into_rows(self) -> Option<Vec<TraceRecord>> {
        self.rows
    }
}

pub fn write_trace_csv<W: io::Write>(
    out: W,
    rows: &[TraceRecord],
    scheme: &str,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.time.to_string().as_str(),
            &r.node.to_string(),
            r.event.name(),
            &r.seq.to_string(),
            &r.attempt.to_string(),
            &r.detail,
            scheme,
        ])?;
    }
    w.flush()?;
    Ok(())
}
