//! Discrete-event simulation of a window flow-controlled transport with
//! four out-of-order caching schemes: an optimistic or pessimistic source
//! paired with a caching or non-caching destination.

pub mod engine;
pub mod error;
pub mod metrics;
pub mod par;
pub mod path;
pub mod reproduce;
pub mod rng;
pub mod scenario;
pub mod sink;
pub mod source;
pub mod trace;
pub mod world;

pub use engine::{SimTime, StopCondition};
pub use error::{Error, Result};
pub use metrics::Metrics;
pub use scenario::{ScenarioConfig, Scheme};
pub use world::{run_scenario, simulate, RunOutput};
