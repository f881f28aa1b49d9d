//! Canned reproductions and the checks run against them.

use std::fmt;
use std::io;

use crate::error::Result;
use crate::metrics::{write_metrics_csv, Metrics};
use crate::par;
use crate::scenario::{
    scenario_congestion, scenario_figure1, scenario_forced_timeouts, scenario_light_load,
    ScenarioConfig, Scheme,
};
use crate::source::SourcePolicy;
use crate::trace::{Node, TraceEvent, TraceRecord};
use crate::world::simulate;

#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Claim {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// Runs `base` once per scheme, same seed and loss plan. Rows come back in
/// ooc1..ooc4 order.
pub fn compare_schemes(base: &ScenarioConfig) -> Result<Vec<Metrics>> {
    let cfgs: Vec<_> = Scheme::ALL
        .iter()
        .map(|&s| base.clone().with_scheme(s))
        .collect();
    par::map(cfgs, |cfg| simulate(&cfg).map(|o| o.metrics))
        .into_iter()
        .collect()
}

pub fn write_comparison_csv<W: io::Write>(out: W, rows: &[Metrics]) -> csv::Result<()> {
    write_metrics_csv(out, rows)
}

/// Source transmissions (first copies and retransmissions) before the first
/// ack reaches the source.
pub fn stall_injections(trace: &[TraceRecord]) -> u64 {
    trace
        .iter()
        .filter(|r| r.node == Node::Src)
        .take_while(|r| r.event != TraceEvent::AckRx)
        .filter(|r| matches!(r.event, TraceEvent::Send | TraceEvent::Retransmit))
        .count() as u64
}

/// Value of `key=` inside a trace detail string, in ms.
fn detail_ms(detail: &str, key: &str) -> Option<f64> {
    detail
        .split(';')
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.parse().ok())
}

pub fn figure1_claims() -> Result<Vec<Claim>> {
    let mut cfg = scenario_figure1();
    cfg.trace = true;
    let out = simulate(&cfg)?;
    let m = &out.metrics;
    let trace = out.trace.as_deref().unwrap_or_default();

    let first_redelivery = trace
        .iter()
        .find(|r| r.node == Node::Snk && r.seq == 1 && r.attempt >= 2)
        .map(|r| r.time);
    let early_drops: Vec<u64> = trace
        .iter()
        .filter(|r| r.event == TraceEvent::DroppedOutOfOrder && Some(r.time) < first_redelivery)
        .map(|r| r.seq)
        .collect();
    let a = first_redelivery.is_some() && [2, 3, 4].iter().all(|s| early_drops.contains(s));

    let delivered = out.world.sink().delivered();
    let twice = delivered
        .iter()
        .all(|&s| m.transmit_counts[(s - 1) as usize] == 2);

    let rtos: Vec<f64> = trace
        .iter()
        .filter(|r| r.event == TraceEvent::TimerFired)
        .filter_map(|r| detail_ms(&r.detail, "rto"))
        .collect();
    let increasing = rtos.len() >= 2 && rtos.windows(2).all(|w| w[1] > w[0]);
    let growth = m.final_rto / m.initial_rto;

    Ok(vec![
        Claim::new(
            "packets 2-4 dropped out of order before the retransmission of 1 arrives",
            a,
            format!("out-of-order drops before it: {early_drops:?}"),
        ),
        Claim::new(
            "every delivered packet was sent exactly twice",
            twice && !delivered.is_empty(),
            format!(
                "{} delivered, histogram {}",
                delivered.len(),
                m.transmit_histogram()
            ),
        ),
        Claim::new(
            "rto strictly increasing across timeouts and grows more than 10x",
            increasing && growth > 10.0 && m.delivered <= 200,
            format!(
                "{} timeouts, rto {:.1} -> {:.1} ms ({growth:.1}x)",
                rtos.len(),
                m.initial_rto,
                m.final_rto
            ),
        ),
        Claim::new(
            "goodput collapses (second half < 0.8 x first half)",
            m.goodput_second_half < 0.8 * m.goodput_first_half,
            format!(
                "{:.3} -> {:.3} pkt/s",
                m.goodput_first_half, m.goodput_second_half
            ),
        ),
    ])
}

pub const FORCED_WINDOWS: [usize; 3] = [1, 4, 8];
pub const FORCED_EXPIRY_COUNTS: [u32; 4] = [0, 1, 3, 5];

pub fn forced_timeout_claims() -> Result<Vec<Claim>> {
    let mut cases = Vec::new();
    for &c in &FORCED_WINDOWS {
        for &n in &FORCED_EXPIRY_COUNTS {
            for policy in [SourcePolicy::Pessimistic, SourcePolicy::Optimistic] {
                cases.push((c, n, policy));
            }
        }
    }
    let runs = par::map(cases, |(c, n, policy)| {
        let mut cfg = scenario_forced_timeouts(c, n, policy);
        cfg.trace = true;
        simulate(&cfg).map(|o| {
            (
                c,
                n,
                policy,
                stall_injections(o.trace.as_deref().unwrap_or_default()),
            )
        })
    });
    let mut claims = Vec::new();
    for run in runs {
        let (c, n, policy, got) = run?;
        let (c64, n64) = (c as u64, u64::from(n));
        let want = match policy {
            SourcePolicy::Pessimistic => (1 + n64) * c64,
            SourcePolicy::Optimistic => c64 + n64,
        };
        let label = match policy {
            SourcePolicy::Pessimistic => "pessimistic",
            SourcePolicy::Optimistic => "optimistic",
        };
        claims.push(Claim::new(
            &format!("C={c} n={n} {label}"),
            got == want,
            format!("{got} injections, expected {want}"),
        ));
    }
    Ok(claims)
}

pub const CONGESTION_SEEDS: u64 = 20;

/// Per-seed congestion results, `runs[i]` holding ooc1..ooc4 for seed i+1.
pub fn congestion_sweep(seeds: u64) -> Result<Vec<[Metrics; 4]>> {
    let jobs: Vec<_> = (1..=seeds)
        .flat_map(|seed| Scheme::ALL.map(|s| scenario_congestion(seed).with_scheme(s)))
        .collect();
    let flat = par::map(jobs, |cfg| simulate(&cfg).map(|o| o.metrics))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(flat
        .chunks(4)
        .map(|c| [c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone()])
        .collect())
}

pub fn congestion_claims(seeds: u64) -> Result<Vec<Claim>> {
    let runs = congestion_sweep(seeds)?;
    let needed = (seeds * 9).div_ceil(10);
    let mean = |i: usize| runs.iter().map(|r| r[i].goodput).sum::<f64>() / runs.len() as f64;
    let wins =
        |a: usize, b: usize| runs.iter().filter(|r| r[a].goodput > r[b].goodput).count() as u64;
    let injected_more = runs
        .iter()
        .filter(|r| r[1].data_transmissions_total > r[0].data_transmissions_total)
        .count() as u64;

    let ordering = |name: &str, a: usize, b: usize| {
        let w = wins(a, b);
        Claim::new(
            name,
            w >= needed && mean(a) > mean(b),
            format!(
                "{w}/{seeds} seeds (need {needed}), pooled {:.3} vs {:.3} pkt/s",
                mean(a),
                mean(b)
            ),
        )
    };
    Ok(vec![
        ordering("goodput ooc1 > ooc2", 0, 1),
        ordering("goodput ooc4 > ooc3", 3, 2),
        Claim::new(
            "injections ooc2 > ooc1 in every seed",
            injected_more == seeds,
            format!("{injected_more}/{seeds} seeds"),
        ),
    ])
}

pub fn light_load_claims() -> Result<Vec<Claim>> {
    let rows = compare_schemes(&scenario_light_load())?;
    let g: Vec<f64> = rows.iter().map(|m| m.goodput).collect();
    let detail = format!(
        "goodput {:.3} / {:.3} / {:.3} / {:.3} pkt/s",
        g[0], g[1], g[2], g[3]
    );
    Ok(vec![
        Claim::new(
            "ooc1 <= ooc2 <= ooc3 <= ooc4",
            g.windows(2).all(|w| w[0] <= w[1]),
            detail.clone(),
        ),
        Claim::new(
            "ooc4 strictly best",
            g[..3].iter().all(|&x| g[3] > x),
            detail,
        ),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reproduction {
    Figure1,
    ForcedTimeouts,
    Congestion,
    LightLoad,
}

impl Reproduction {
    pub fn claims(self) -> Result<Vec<Claim>> {
        match self {
            Reproduction::Figure1 => figure1_claims(),
            Reproduction::ForcedTimeouts => forced_timeout_claims(),
            Reproduction::Congestion => congestion_claims(CONGESTION_SEEDS),
            Reproduction::LightLoad => light_load_claims(),
        }
    }
}
