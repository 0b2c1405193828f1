//! Event-driven simulation of multiple adaptive-bitrate video clients that
//! share a time-varying bottleneck link.
//!
//! The crate is organized around a small set of building blocks:
//!
//! * [`media`]: client profiles (bitrate ladders and perceptual quality
//!   curves) and interpolation between ladder rungs.
//! * [`metrics`]: per-segment QoE, its bias-corrected moving average, and the
//!   deviation-based fairness index across clients.
//! * [`traces`]: bandwidth traces, their statistics and classification, the
//!   ingestion/undersampling/split pipeline, and a synthetic generator.
//! * [`agents`]: bitrate selection policies (min/max/random/greedy).
//! * [`sim`]: the event-driven episode engine and bandwidth sharing models.
//! * [`tiopt`]: the time-independent quality/fairness optimizer and its
//!   Pareto front.
//! * [`harness`]: batch experiment runner, per-episode metrics, aggregation,
//!   and deterministic CSV/JSON output.
//!
//! All randomness flows from explicit seeds through a platform-stable RNG, so
//! any run is reproducible bit for bit.

pub mod agents;
pub mod error;
pub mod harness;
pub mod media;
pub mod metrics;
pub mod sim;
pub mod tiopt;
pub mod traces;
pub mod util;

pub use agents::{AgentSpec, Policy};
pub use error::{Error, Result};
pub use media::{ClientProfile, ProfileSet, LADDER_LEN};
pub use metrics::{EmaState, QoeCoefficients, QoeInputs};
pub use sim::{EpisodeLog, Observation, SessionConfig, SharingMode, StepRecord};
pub use tiopt::{Ladder, Solution, SweepGrid};
pub use traces::{Dataset, Split, Trace, TraceClass, TraceStats};
