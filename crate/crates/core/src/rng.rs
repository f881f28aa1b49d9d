//! Seeded random streams.
//!
//! Every stream is ChaCha8 keyed by the run seed and selected by a fixed
//! stream number, so independent consumers (forward loss, ack loss, cross
//! traffic) never perturb each other's draws and results are identical on
//! every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// Stream numbers used by the simulator.
pub mod streams {
    pub const FORWARD_LOSS: u64 = 1;
    pub const ACK_LOSS: u64 = 2;
    pub const CROSS_TRAFFIC: u64 = 3;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// True with probability `p`. Consumes no randomness when `p` is 0 or 1.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    /// Exponential draw with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        Exp::new(1.0 / mean)
            .expect("exponential mean must be positive")
            .sample(&mut self.rng)
    }
}
