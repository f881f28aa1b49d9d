//! Per-run aggregates and their CSV form.

use std::collections::BTreeMap;
use std::io;

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub scheme: String,
    pub seed: u64,
    /// Milliseconds.
    pub sim_duration: f64,
    pub delivered: u64,
    pub completed: bool,
    pub data_transmissions_total: u64,
    pub retransmissions: u64,
    pub timeout_events: u64,
    pub duplicates_at_sink: u64,
    pub out_of_order_drops: u64,
    pub cache_full_drops: u64,
    pub overflow_drops: u64,
    pub forced_drops: u64,
    pub random_drops: u64,
    /// Delivered packets per second over the whole run.
    pub goodput: f64,
    pub goodput_first_half: f64,
    pub goodput_second_half: f64,
    pub initial_rto: f64,
    pub final_srtt: f64,
    pub final_rto: f64,
    pub peak_cache_occupancy: usize,
    /// Transmission count per sequence number, from seq 1.
    pub transmit_counts: Vec<u32>,
}

pub const METRICS_HEADER: [&str; 23] = [
    "scheme",
    "seed",
    "sim_duration_ms",
    "delivered",
    "completed",
    "data_transmissions_total",
    "retransmissions",
    "timeout_events",
    "duplicates_at_sink",
    "out_of_order_drops",
    "cache_full_drops",
    "overflow_drops",
    "forced_drops",
    "random_drops",
    "goodput_pps",
    "goodput_first_half_pps",
    "goodput_second_half_pps",
    "initial_rto_ms",
    "final_srtt_ms",
    "final_rto_ms",
    "peak_cache_occupancy",
    "sent_packets",
    "transmit_count_histogram",
];

impl Metrics {
    /// `count:packets` pairs, e.g. `1:190;2:10`.
    pub fn transmit_histogram(&self) -> String {
        let mut h: BTreeMap<u32, u64> = BTreeMap::new();
        for &c in self.transmit_counts.iter().filter(|&&c| c > 0) {
            *h.entry(c).or_default() += 1;
        }
        h.iter()
            .map(|(c, n)| format!("{c}:{n}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.seed.to_string(),
            format!("{:.3}", self.sim_duration),
            self.delivered.to_string(),
            self.completed.to_string(),
            self.data_transmissions_total.to_string(),
            self.retransmissions.to_string(),
            self.timeout_events.to_string(),
            self.duplicates_at_sink.to_string(),
            self.out_of_order_drops.to_string(),
            self.cache_full_drops.to_string(),
            self.overflow_drops.to_string(),
            self.forced_drops.to_string(),
            self.random_drops.to_string(),
            format!("{:.6}", self.goodput),
            format!("{:.6}", self.goodput_first_half),
            format!("{:.6}", self.goodput_second_half),
            format!("{:.3}", self.initial_rto),
            format!("{:.3}", self.final_srtt),
            format!("{:.3}", self.final_rto),
            self.peak_cache_occupancy.to_string(),
            self.transmit_counts
                .iter()
                .filter(|&&c| c > 0)
                .count()
                .to_string(),
            self.transmit_histogram(),
        ]
    }

    /// `data_transmissions_total = sent + retransmissions` and, on a completed
    /// run, every packet was sent at least once.
    pub fn check_identities(&self, packets: u64) -> Result<(), String> {
        let sent = self.transmit_counts.iter().filter(|&&c| c > 0).count() as u64;
        let total: u64 = self.transmit_counts.iter().map(|&c| u64::from(c)).sum();
        if total != self.data_transmissions_total {
            return Err(format!(
                "per-packet counts sum {total} != total {}",
                self.data_transmissions_total
            ));
        }
        if self.data_transmissions_total != sent + self.retransmissions {
            return Err("transmissions != sent + retransmissions".into());
        }
        if self.completed {
            if self.delivered != packets || sent != packets {
                return Err(format!(
                    "completed run delivered {} of {packets}",
                    self.delivered
                ));
            }
            if self.data_transmissions_total != packets + self.retransmissions {
                return Err("transmissions != N + retransmissions".into());
            }
            if self.goodput.is_nan() || self.goodput <= 0.0 {
                return Err("completed run with zero goodput".into());
            }
        }
        Ok(())
    }
}

pub fn write_metrics_csv<'a, W: io::Write>(
    out: W,
    rows: impl IntoIterator<Item = &'a Metrics>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in rows {
        w.write_record(m.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
