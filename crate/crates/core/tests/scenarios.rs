use oocsim::engine::SimTime;
use oocsim::path::{Arrival, Router, RouterItem};
use oocsim::scenario::{scenario_congestion, scenario_figure1, ScenarioConfig, Scheme};
use oocsim::simulate;
use oocsim::trace::write_trace_csv;

#[test]
fn saturated_router_holds_buffer_and_serves_at_line_rate() {
    let service = SimTime::from_millis(4);
    let mut r = Router::new(5, service);
    let mut next_departure = None;
    let mut departures = Vec::new();
    let mut drops = 0;
    // One arrival per millisecond against one departure every 4 ms.
    for ms in 0..400u64 {
        let now = SimTime::from_millis(ms);
        if next_departure == Some(now) {
            let (_, next) = r.depart(now);
            departures.push(now);
            next_departure = next;
        }
        match r.arrive(RouterItem::Cross, now) {
            Arrival::Started { departs_at } => next_departure = Some(departs_at),
            Arrival::Queued { queue_len } => assert!(queue_len <= 5),
            Arrival::Dropped => drops += 1,
        }
        if ms > 40 {
            assert_eq!(r.queue_len(), 5);
        }
    }
    assert!(drops > 0);
    for w in departures.windows(2) {
        assert_eq!(w[1] - w[0], service);
    }
    assert_eq!(departures.len(), 99);
}

fn trace_without_scheme(cfg: &ScenarioConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.trace = true;
    let rows = simulate(&cfg).unwrap().trace.unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &rows, "").unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn lossless_traces_agree_across_schemes() {
    let base = ScenarioConfig {
        packets: 60,
        window: 6,
        cross_interarrival: Some(SimTime::from_millis(3)),
        buffer: 32,
        seed: 9,
        ..ScenarioConfig::default()
    };
    let reference = trace_without_scheme(&base.clone().with_scheme(Scheme::OOC1));
    assert!(reference.lines().count() > 100);
    for s in &Scheme::ALL[1..] {
        assert_eq!(
            trace_without_scheme(&base.clone().with_scheme(*s)),
            reference,
            "{}",
            s.label()
        );
    }
}

#[test]
fn lossy_acks_still_complete() {
    for seed in 0..20 {
        for scheme in Scheme::ALL {
            let mut cfg = ScenarioConfig {
                scheme,
                packets: 100,
                loss_p: 0.1,
                seed,
                check_invariants: true,
                ..ScenarioConfig::default()
            };
            cfg.link.ack_lossless = false;
            let out = simulate(&cfg).unwrap();
            assert!(out.metrics.completed, "seed {seed} {}", scheme.label());
        }
    }
}

#[test]
fn figure1_keeps_every_packet_in_the_cascade() {
    let m = simulate(&scenario_figure1()).unwrap().metrics;
    let sent = m.data_transmissions_total - m.retransmissions;
    // Every first copy after the lost packet 1 reaches the sink out of order.
    assert_eq!(m.out_of_order_drops, sent - 1);
    assert_eq!(m.duplicates_at_sink, 0);
    assert!(m.timeout_events >= m.delivered);
    assert!(!m.completed);
}

#[test]
fn congestion_loss_is_overflow_only() {
    for seed in 1..4 {
        for scheme in Scheme::ALL {
            let m = simulate(&scenario_congestion(seed).with_scheme(scheme))
                .unwrap()
                .metrics;
            assert!(m.overflow_drops > 0);
            assert_eq!(m.forced_drops + m.random_drops, 0);
        }
    }
}

#[test]
fn config_text_round_trips() {
    let mut cfg = scenario_congestion(5).with_scheme(Scheme::OOC3);
    cfg.forced_drops = vec![(3, 1), (9, 2)];
    cfg.forced_expiries = vec![SimTime::from_millis(10), SimTime::from_micros(20_500)];
    cfg.cache_capacity = Some(4);
    let back = ScenarioConfig::parse(&cfg.to_kv_string()).unwrap();
    assert_eq!(back.to_kv_string(), cfg.to_kv_string());
    assert_eq!(
        simulate(&back).unwrap().metrics,
        simulate(&cfg).unwrap().metrics
    );
}
