//! Scenario configuration and the canned experiments.
//!
//! Config files are flat UTF-8 `key = value` lines; `#` starts a comment.
//! Times are given in milliseconds and may be fractional (resolution 1 µs).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::{SimTime, StopCondition};
use crate::error::{Error, Result};
use crate::path::LinkConfig;
use crate::sink::{SinkMode, SinkPolicy};
use crate::source::{SourcePolicy, TimerParams};

/// A (source policy, destination policy) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scheme {
    pub source: SourcePolicy,
    pub sink: SinkMode,
}

impl Scheme {
    pub const OOC1: Scheme = Scheme::new(SourcePolicy::Optimistic, SinkMode::NonCaching);
    pub const OOC2: Scheme = Scheme::new(SourcePolicy::Pessimistic, SinkMode::NonCaching);
    pub const OOC3: Scheme = Scheme::new(SourcePolicy::Pessimistic, SinkMode::Caching);
    pub const OOC4: Scheme = Scheme::new(SourcePolicy::Optimistic, SinkMode::Caching);
    pub const ALL: [Scheme; 4] = [Scheme::OOC1, Scheme::OOC2, Scheme::OOC3, Scheme::OOC4];

    pub const fn new(source: SourcePolicy, sink: SinkMode) -> Self {
        Scheme { source, sink }
    }

    pub fn label(&self) -> &'static str {
        match (self.source, self.sink) {
            (SourcePolicy::Optimistic, SinkMode::NonCaching) => "ooc1",
            (SourcePolicy::Pessimistic, SinkMode::NonCaching) => "ooc2",
            (SourcePolicy::Pessimistic, SinkMode::Caching) => "ooc3",
            (SourcePolicy::Optimistic, SinkMode::Caching) => "ooc4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    /// Accepts `ooc1`..`ooc4` (also spelled `ooo1`, `ooc-1`, ...).
    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect();
        match norm.as_str() {
            "ooc1" | "ooo1" => Ok(Scheme::OOC1),
            "ooc2" | "ooo2" => Ok(Scheme::OOC2),
            "ooc3" | "ooo3" => Ok(Scheme::OOC3),
            "ooc4" | "ooo4" => Ok(Scheme::OOC4),
            _ => Err(format!("unknown scheme `{s}` (expected ooc1..ooc4)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopKind {
    MaxTime,
    Delivered,
    QueueEmpty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub window: usize,
    pub packets: u64,
    /// Application inter-generation time; zero means always backlogged.
    pub gen_interval: SimTime,
    pub timer: TimerParams,
    pub link: LinkConfig,
    pub buffer: usize,
    pub service_time: SimTime,
    pub forced_drops: Vec<(u64, u32)>,
    pub loss_p: f64,
    /// Mean cross-traffic inter-arrival time at the router, if any.
    pub cross_interarrival: Option<SimTime>,
    pub cache_capacity: Option<usize>,
    /// Times at which the oldest outstanding packet's timer is forced to expire.
    pub forced_expiries: Vec<SimTime>,
    pub seed: u64,
    pub stop: StopKind,
    /// Hard horizon, applied whatever the stop kind.
    pub max_time: SimTime,
    pub trace: bool,
    pub check_invariants: bool,
    pub metrics_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::OOC4,
            window: 8,
            packets: 200,
            gen_interval: SimTime::ZERO,
            timer: TimerParams::default(),
            link: LinkConfig::default(),
            buffer: 64,
            service_time: SimTime::from_millis(1),
            forced_drops: Vec::new(),
            loss_p: 0.0,
            cross_interarrival: None,
            cache_capacity: None,
            forced_expiries: Vec::new(),
            seed: 1,
            stop: StopKind::Delivered,
            max_time: SimTime::from_millis(1_000_000_000_000),
            trace: false,
            check_invariants: false,
            metrics_out: None,
            trace_out: None,
        }
    }
}

fn parse_ms(field: &str, v: &str) -> Result<SimTime> {
    let ms: f64 = v
        .parse()
        .map_err(|_| Error::config(field, format!("`{v}` is not a number of milliseconds")))?;
    if !ms.is_finite() || ms < 0.0 {
        return Err(Error::config(field, "must be a non-negative time"));
    }
    Ok(SimTime::from_millis_f64(ms))
}

fn parse_num<T: FromStr>(field: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{v}`")))
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(field, format!("`{v}` is not a boolean"))),
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn fmt_ms(t: SimTime) -> String {
    let s = t.to_string();
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

impl ScenarioConfig {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sink_policy(&self) -> SinkPolicy {
        SinkPolicy {
            mode: self.scheme.sink,
            cache_capacity: self.cache_capacity,
        }
    }

    pub fn stop_conditions(&self) -> Vec<StopCondition> {
        let primary = match self.stop {
            StopKind::MaxTime => StopCondition::MaxTime(self.max_time),
            StopKind::Delivered => StopCondition::Delivered(self.packets),
            StopKind::QueueEmpty => StopCondition::QueueEmpty,
        };
        vec![primary, StopCondition::MaxTime(self.max_time)]
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "scheme" => self.scheme = v.parse().map_err(|e: String| Error::config("scheme", e))?,
            "source_mode" => {
                self.scheme.source = match v {
                    "optimistic" => SourcePolicy::Optimistic,
                    "pessimistic" => SourcePolicy::Pessimistic,
                    _ => {
                        return Err(Error::config(
                            "source_mode",
                            "expected optimistic|pessimistic",
                        ))
                    }
                }
            }
            "sink_mode" => {
                self.scheme.sink = match v {
                    "caching" => SinkMode::Caching,
                    "non_caching" => SinkMode::NonCaching,
                    _ => return Err(Error::config("sink_mode", "expected caching|non_caching")),
                }
            }
            "window" => self.window = parse_num("window", v)?,
            "packets" => self.packets = parse_num("packets", v)?,
            "gen_interval_ms" => self.gen_interval = parse_ms("gen_interval_ms", v)?,
            "alpha" => self.timer.alpha = parse_num("alpha", v)?,
            "beta" => self.timer.beta = parse_num("beta", v)?,
            "rto_min_ms" => self.timer.rto_min = parse_ms("rto_min_ms", v)?,
            "rto_max_ms" => self.timer.rto_max = parse_ms("rto_max_ms", v)?,
            "initial_srtt_ms" => self.timer.initial_srtt = parse_ms("initial_srtt_ms", v)?,
            "backoff" => self.timer.backoff = parse_bool("backoff", v)?,
            "forward_delay_ms" => self.link.forward_prop_delay = parse_ms("forward_delay_ms", v)?,
            "reverse_delay_ms" => self.link.reverse_prop_delay = parse_ms("reverse_delay_ms", v)?,
            "delivery_delay_ms" => self.link.delivery_delay = parse_ms("delivery_delay_ms", v)?,
            "ack_lossless" => self.link.ack_lossless = parse_bool("ack_lossless", v)?,
            "buffer" => self.buffer = parse_num("buffer", v)?,
            "service_time_ms" => self.service_time = parse_ms("service_time_ms", v)?,
            "forced_drops" => {
                self.forced_drops = list(v)
                    .map(|item| {
                        let (s, a) = item.split_once(':').ok_or_else(|| {
                            Error::config("forced_drops", format!("`{item}` is not seq:attempt"))
                        })?;
                        Ok((parse_num("forced_drops", s)?, parse_num("forced_drops", a)?))
                    })
                    .collect::<Result<_>>()?
            }
            "loss_p" => self.loss_p = parse_num("loss_p", v)?,
            "cross_interarrival_ms" => {
                self.cross_interarrival = match v {
                    "none" | "0" => None,
                    _ => Some(parse_ms("cross_interarrival_ms", v)?),
                }
            }
            "cache_capacity" => {
                self.cache_capacity = match v {
                    "unlimited" => None,
                    _ => Some(parse_num("cache_capacity", v)?),
                }
            }
            "forced_expiries_ms" => {
                self.forced_expiries = list(v)
                    .map(|t| parse_ms("forced_expiries_ms", t))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse_num("seed", v)?,
            "stop" => {
                self.stop = match v {
                    "max_time" => StopKind::MaxTime,
                    "delivered" => StopKind::Delivered,
                    "queue_empty" => StopKind::QueueEmpty,
                    _ => {
                        return Err(Error::config(
                            "stop",
                            "expected max_time|delivered|queue_empty",
                        ))
                    }
                }
            }
            "max_time_ms" => self.max_time = parse_ms("max_time_ms", v)?,
            "trace" => self.trace = parse_bool("trace", v)?,
            "check_invariants" => self.check_invariants = parse_bool("check_invariants", v)?,
            "metrics_out" => self.metrics_out = Some(PathBuf::from(v)),
            "trace_out" => {
                self.trace_out = Some(PathBuf::from(v));
                self.trace = true;
            }
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("window", "must be positive"));
        }
        if self.packets == 0 {
            return Err(Error::config("packets", "must be positive"));
        }
        if self.buffer == 0 {
            return Err(Error::config("buffer", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.loss_p) {
            return Err(Error::config("loss_p", "must lie in [0, 1]"));
        }
        if !(self.timer.alpha > 0.0 && self.timer.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        if self.timer.beta.is_nan() || self.timer.beta < 1.0 {
            return Err(Error::config("beta", "must be at least 1"));
        }
        if self.timer.initial_srtt == SimTime::ZERO {
            return Err(Error::config("initial_srtt_ms", "must be positive"));
        }
        if self.timer.rto_min == SimTime::ZERO || self.timer.rto_min > self.timer.rto_max {
            return Err(Error::config(
                "rto_min_ms",
                "must be positive and not above rto_max_ms",
            ));
        }
        if self.cross_interarrival == Some(SimTime::ZERO) {
            return Err(Error::config("cross_interarrival_ms", "must be positive"));
        }
        if self.cache_capacity == Some(0) {
            return Err(Error::config("cache_capacity", "must be positive"));
        }
        if self.forced_drops.iter().any(|&(s, a)| s == 0 || a == 0) {
            return Err(Error::config("forced_drops", "seq and attempt start at 1"));
        }
        Ok(())
    }

    /// Serializes to the config file format. Output paths are omitted.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("scheme", self.scheme.label().into());
        put("window", self.window.to_string());
        put("packets", self.packets.to_string());
        put("gen_interval_ms", fmt_ms(self.gen_interval));
        put("alpha", self.timer.alpha.to_string());
        put("beta", self.timer.beta.to_string());
        put("rto_min_ms", fmt_ms(self.timer.rto_min));
        put("rto_max_ms", fmt_ms(self.timer.rto_max));
        put("initial_srtt_ms", fmt_ms(self.timer.initial_srtt));
        put("backoff", self.timer.backoff.to_string());
        put("forward_delay_ms", fmt_ms(self.link.forward_prop_delay));
        put("reverse_delay_ms", fmt_ms(self.link.reverse_prop_delay));
        put("delivery_delay_ms", fmt_ms(self.link.delivery_delay));
        put("ack_lossless", self.link.ack_lossless.to_string());
        put("buffer", self.buffer.to_string());
        put("service_time_ms", fmt_ms(self.service_time));
        put(
            "forced_drops",
            self.forced_drops
                .iter()
                .map(|(s, a)| format!("{s}:{a}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("loss_p", self.loss_p.to_string());
        put(
            "cross_interarrival_ms",
            self.cross_interarrival.map_or("none".into(), fmt_ms),
        );
        put(
            "cache_capacity",
            self.cache_capacity
                .map_or("unlimited".into(), |m| m.to_string()),
        );
        put(
            "forced_expiries_ms",
            self.forced_expiries
                .iter()
                .map(|t| fmt_ms(*t))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("seed", self.seed.to_string());
        put(
            "stop",
            match self.stop {
                StopKind::MaxTime => "max_time",
                StopKind::Delivered => "delivered",
                StopKind::QueueEmpty => "queue_empty",
            }
            .into(),
        );
        put("max_time_ms", fmt_ms(self.max_time));
        put("trace", self.trace.to_string());
        put("check_invariants", self.check_invariants.to_string());
        out
    }
}

/// Single loss of packet 1 behind a non-caching destination with an
/// optimistic source, window 4.
///
/// The application produces a packet every 20 ms while the unloaded round
/// trip is 11 ms, so each first copy leaves more than a round trip after
/// its predecessor. The first timeout (100 ms) fires after packets 2-4 have
/// been sent and dropped out of order.
pub fn scenario_figure1() -> ScenarioConfig {
    ScenarioConfig {
        scheme: Scheme::OOC1,
        window: 4,
        packets: 1_000,
        gen_interval: SimTime::from_millis(20),
        timer: TimerParams {
            initial_srtt: SimTime::from_millis(50),
            ..TimerParams::default()
        },
        link: LinkConfig {
            forward_prop_delay: SimTime::from_millis(5),
            reverse_prop_delay: SimTime::from_millis(5),
            delivery_delay: SimTime::ZERO,
            ack_lossless: true,
        },
        buffer: 64,
        service_time: SimTime::from_millis(1),
        forced_drops: vec![(1, 1)],
        stop: StopKind::MaxTime,
        max_time: SimTime::from_millis(120_000),
        ..ScenarioConfig::default()
    }
}

/// Spacing between harness-forced expiries in [`scenario_forced_timeouts`].
pub const FORCED_EXPIRY_GAP: SimTime = SimTime::from_millis(10);

/// Holds `window` packets outstanding while exactly `n` expiries are forced,
/// then lets the acks through.
///
/// The natural timeout (20 s) is far beyond the stall, and the reverse
/// delay keeps the first ack away until after the last forced expiry.
pub fn scenario_forced_timeouts(window: usize, n: u32, policy: SourcePolicy) -> ScenarioConfig {
    let stall = FORCED_EXPIRY_GAP.as_micros() * u64::from(n);
    ScenarioConfig {
        scheme: Scheme::new(policy, SinkMode::Caching),
        window,
        packets: 2 * window as u64,
        timer: TimerParams {
            initial_srtt: SimTime::from_millis(10_000),
            ..TimerParams::default()
        },
        link: LinkConfig {
            forward_prop_delay: SimTime::from_millis(10),
            reverse_prop_delay: SimTime::from_micros(stall) + SimTime::from_millis(50),
            delivery_delay: SimTime::ZERO,
            ack_lossless: true,
        },
        buffer: 1_024,
        service_time: SimTime::from_millis(1),
        forced_expiries: (1..=u64::from(n))
            .map(|k| SimTime::from_micros(k * FORCED_EXPIRY_GAP.as_micros()))
            .collect(),
        stop: StopKind::Delivered,
        ..ScenarioConfig::default()
    }
}

/// Bottleneck router with a two-packet buffer, 70% loaded by Poisson cross
/// traffic, all loss by overflow. The window (16) is far larger than the
/// buffer, so a window-sized burst cannot fit. The application paces a new
/// packet every 30 ms.
pub fn scenario_congestion(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        scheme: Scheme::OOC1,
        window: 16,
        packets: 2_000,
        gen_interval: SimTime::from_millis(30),
        timer: TimerParams {
            initial_srtt: SimTime::from_millis(104),
            ..TimerParams::default()
        },
        link: LinkConfig {
            forward_prop_delay: SimTime::from_millis(50),
            reverse_prop_delay: SimTime::from_millis(50),
            delivery_delay: SimTime::ZERO,
            ack_lossless: true,
        },
        buffer: 2,
        service_time: SimTime::from_millis(2),
        cross_interarrival: Some(SimTime::from_micros(2_857)),
        seed,
        stop: StopKind::Delivered,
        max_time: SimTime::from_millis(300_000),
        ..ScenarioConfig::default()
    }
}

/// Backlogged source, ample buffers and one mid-stream loss.
pub fn scenario_light_load() -> ScenarioConfig {
    ScenarioConfig {
        scheme: Scheme::OOC4,
        window: 8,
        packets: 400,
        timer: TimerParams {
            initial_srtt: SimTime::from_millis(30),
            ..TimerParams::default()
        },
        link: LinkConfig {
            forward_prop_delay: SimTime::from_millis(10),
            reverse_prop_delay: SimTime::from_millis(10),
            delivery_delay: SimTime::ZERO,
            ack_lossless: true,
        },
        buffer: 64,
        service_time: SimTime::from_millis(4),
        forced_drops: vec![(100, 1)],
        stop: StopKind::Delivered,
        max_time: SimTime::from_millis(3_600_000),
        ..ScenarioConfig::default()
    }
}
