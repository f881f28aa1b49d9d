use std::collections::BTreeSet;

use oocsim::engine::SimTime;
use oocsim::scenario::{ScenarioConfig, Scheme};
use oocsim::simulate;
use oocsim::sink::{Sink, SinkPolicy};
use oocsim::source::{RttEstimator, TimerParams};
use proptest::prelude::*;

fn scheme() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_scheme_delivers_everything_once(
        scheme in scheme(),
        window in 1usize..10,
        packets in 1u64..80,
        loss_p in prop::sample::select(vec![0.0, 0.05, 0.2]),
        buffer in 1usize..12,
        cross in prop::option::of(2u64..20),
        drops in prop::collection::vec((1u64..80, 1u32..3), 0..4),
        seed in any::<u64>(),
    ) {
        // Divergent timers would otherwise leave cross traffic running for
        // years of simulated time. Without cross traffic a clamped rto can
        // phase-lock a tiny buffer, so the cap only goes with random arrivals.
        let mut timer = TimerParams::default();
        if cross.is_some() {
            timer.rto_max = SimTime::from_millis(2_000);
        }
        let cfg = ScenarioConfig {
            scheme,
            window,
            packets,
            timer,
            loss_p,
            buffer,
            cross_interarrival: cross.map(SimTime::from_millis),
            forced_drops: drops,
            seed,
            check_invariants: true,
            ..ScenarioConfig::default()
        };
        let out = simulate(&cfg).unwrap();
        let want: Vec<u64> = (1..=packets).collect();
        prop_assert_eq!(out.world.sink().delivered(), want.as_slice());
        prop_assert!(out.metrics.check_identities(packets).is_ok());
        prop_assert!(out.metrics.completed);
    }

    #[test]
    fn caching_sink_delivers_longest_arrived_prefix(arrivals in prop::collection::vec(1u64..30, 0..80)) {
        let mut sink = Sink::new(SinkPolicy::caching());
        for &s in &arrivals {
            sink.on_data(s);
            prop_assert!(sink.check_invariants().is_ok());
        }
        let seen: BTreeSet<u64> = arrivals.iter().copied().collect();
        let k = (1..).take_while(|s| seen.contains(s)).count() as u64;
        let want: Vec<u64> = (1..=k).collect();
        prop_assert_eq!(sink.delivered(), want.as_slice());
    }

    #[test]
    fn non_caching_sink_accepts_only_the_next_packet(arrivals in prop::collection::vec(1u64..10, 0..80)) {
        let mut sink = Sink::new(SinkPolicy::non_caching());
        let mut next = 1;
        for &s in &arrivals {
            let out = sink.on_data(s);
            if s == next {
                next += 1;
            }
            prop_assert_eq!(out.ack, next - 1);
            prop_assert!(sink.cache().is_empty());
        }
        let want: Vec<u64> = (1..next).collect();
        prop_assert_eq!(sink.delivered(), want.as_slice());
    }

    #[test]
    fn estimator_stays_in_bounds(samples in prop::collection::vec(1.0f64..5e6, 1..100), srtt0 in 1u64..1000) {
        let params = TimerParams {
            initial_srtt: SimTime::from_millis(srtt0),
            rto_max: SimTime::from_millis(60_000),
            ..TimerParams::default()
        };
        let mut est = RttEstimator::new(params);
        for s in samples {
            let (srtt, rto) = est.update(s);
            prop_assert!(srtt > 0.0);
            prop_assert!((1_000.0..=60_000_000.0).contains(&rto));
        }
    }

    #[test]
    fn lossless_runs_send_each_packet_once(scheme in scheme(), window in 1usize..16, packets in 1u64..150) {
        let cfg = ScenarioConfig { scheme, window, packets, ..ScenarioConfig::default() };
        let m = simulate(&cfg).unwrap().metrics;
        prop_assert_eq!(m.retransmissions, 0);
        prop_assert_eq!(m.duplicates_at_sink, 0);
        prop_assert!(m.transmit_counts.iter().all(|&c| c == 1));
    }
}
