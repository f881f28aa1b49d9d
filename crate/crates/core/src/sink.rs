//! Receiving endpoint: in-order delivery, cumulative acks and the
//! optional out-of-order cache.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SinkMode {
    Caching,
    NonCaching,
}

impl fmt::Display for SinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SinkMode::Caching => "caching",
            SinkMode::NonCaching => "non_caching",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SinkPolicy {
    pub mode: SinkMode,
    /// `None` means unlimited.
    pub cache_capacity: Option<usize>,
}

impl SinkPolicy {
    pub fn caching() -> Self {
        Self {
            mode: SinkMode::Caching,
            cache_capacity: None,
        }
    }

    pub fn non_caching() -> Self {
        Self {
            mode: SinkMode::NonCaching,
            cache_capacity: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Disposition {
    Delivered,
    Cached,
    DroppedOutOfOrder,
    DroppedDuplicate,
    DroppedCacheFull,
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disposition::Delivered => "delivered",
            Disposition::Cached => "cached",
            Disposition::DroppedOutOfOrder => "dropped_out_of_order",
            Disposition::DroppedDuplicate => "dropped_duplicate",
            Disposition::DroppedCacheFull => "dropped_cache_full",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinkOutcome {
    pub delivered_now: Vec<u64>,
    /// Cumulative ack to emit; sent on every arrival.
    pub ack: u64,
    pub disposition: Disposition,
}

/// The run `expected, expected+1, ...` that becomes deliverable when
/// `arriving` shows up, given the cached sequence numbers.
pub fn deliverable_run(expected: u64, cache: &BTreeSet<u64>, arriving: u64) -> Vec<u64> {
    if arriving != expected {
        return Vec::new();
    }
    let mut run = vec![expected];
    let mut next = expected + 1;
    while cache.contains(&next) {
        run.push(next);
        next += 1;
    }
    run
}

#[derive(Clone, Debug)]
pub struct Sink {
    policy: SinkPolicy,
    expected: u64,
    cache: BTreeSet<u64>,
    delivered: Vec<u64>,
    peak_cache: usize,
}

impl Sink {
    pub fn new(policy: SinkPolicy) -> Self {
        Self {
            policy,
            expected: 1,
            cache: BTreeSet::new(),
            delivered: Vec::new(),
            peak_cache: 0,
        }
    }

    pub fn policy(&self) -> SinkPolicy {
        self.policy
    }
    pub fn expected(&self) -> u64 {
        self.expected
    }
    pub fn cache(&self) -> &BTreeSet<u64> {
        &self.cache
    }
    pub fn delivered(&self) -> &[u64] {
        &self.delivered
    }
    pub fn peak_cache(&self) -> usize {
        self.peak_cache
    }

    pub fn on_data(&mut self, seq: u64) -> SinkOutcome {
        let (delivered_now, disposition) = if seq < self.expected {
            (Vec::new(), Disposition::DroppedDuplicate)
        } else if seq == self.expected {
            let run = deliverable_run(self.expected, &self.cache, seq);
            for s in &run {
                self.cache.remove(s);
            }
            self.expected += run.len() as u64;
            self.delivered.extend_from_slice(&run);
            (run, Disposition::Delivered)
        } else {
            let d = match self.policy.mode {
                SinkMode::NonCaching => Disposition::DroppedOutOfOrder,
                SinkMode::Caching if self.cache.contains(&seq) => Disposition::DroppedDuplicate,
                SinkMode::Caching
                    if self
                        .policy
                        .cache_capacity
                        .is_some_and(|m| self.cache.len() >= m) =>
                {
                    Disposition::DroppedCacheFull
                }
                SinkMode::Caching => {
                    self.cache.insert(seq);
                    self.peak_cache = self.peak_cache.max(self.cache.len());
                    Disposition::Cached
                }
            };
            (Vec::new(), d)
        };
        SinkOutcome {
            delivered_now,
            ack: self.expected - 1,
            disposition,
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.delivered.len() as u64 != self.expected - 1 {
            return Err(format!(
                "delivered {} packets but expected is {}",
                self.delivered.len(),
                self.expected
            ));
        }
        if let Some(&last) = self.delivered.last() {
            if last != self.expected - 1 {
                return Err("delivered log is not 1..k".into());
            }
        }
        if self.policy.mode == SinkMode::NonCaching && !self.cache.is_empty() {
            return Err("non-caching sink holds packets".into());
        }
        if let Some(m) = self.policy.cache_capacity {
            if self.cache.len() > m {
                return Err(format!("cache {} over capacity {m}", self.cache.len()));
            }
        }
        if self.cache.first().is_some_and(|&s| s <= self.expected) {
            return Err("cache holds deliverable packet".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_caching_drops_then_delivers() {
        let mut s = Sink::new(SinkPolicy::non_caching());
        for seq in [2, 3, 4] {
            let o = s.on_data(seq);
            assert_eq!(o.disposition, Disposition::DroppedOutOfOrder);
            assert_eq!(o.ack, 0);
        }
        let o = s.on_data(1);
        assert_eq!(o.delivered_now, vec![1]);
        assert_eq!(o.ack, 1);
        s.check_invariants().unwrap();
    }

    #[test]
    fn caching_releases_contiguous_run() {
        let mut s = Sink::new(SinkPolicy::caching());
        for seq in [2, 3, 4] {
            assert_eq!(s.on_data(seq).disposition, Disposition::Cached);
        }
        let o = s.on_data(1);
        assert_eq!(o.delivered_now, vec![1, 2, 3, 4]);
        assert_eq!(o.ack, 4);
        assert!(s.cache().is_empty());
        assert_eq!(s.peak_cache(), 3);
    }

    #[test]
    fn late_copy_is_duplicate() {
        let mut s = Sink::new(SinkPolicy::caching());
        for seq in 1..=4 {
            s.on_data(seq);
        }
        let o = s.on_data(1);
        assert_eq!(o.disposition, Disposition::DroppedDuplicate);
        assert_eq!(o.ack, 4);
    }

    #[test]
    fn cached_duplicate_dropped() {
        let mut s = Sink::new(SinkPolicy::caching());
        s.on_data(3);
        assert_eq!(s.on_data(3).disposition, Disposition::DroppedDuplicate);
    }

    #[test]
    fn bounded_cache_drops_arrivals() {
        let mut s = Sink::new(SinkPolicy {
            mode: SinkMode::Caching,
            cache_capacity: Some(2),
        });
        s.on_data(5);
        s.on_data(3);
        assert_eq!(s.on_data(4).disposition, Disposition::DroppedCacheFull);
        assert_eq!(s.cache().iter().copied().collect::<Vec<_>>(), vec![3, 5]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn run_stops_at_gap() {
        let cache: BTreeSet<u64> = [2, 3, 4].into();
        assert_eq!(deliverable_run(1, &cache, 1), vec![1, 2, 3, 4]);
        let cache: BTreeSet<u64> = [3, 4].into();
        assert_eq!(deliverable_run(1, &cache, 1), vec![1]);
        assert_eq!(deliverable_run(7, &BTreeSet::new(), 7), vec![7]);
    }
}
