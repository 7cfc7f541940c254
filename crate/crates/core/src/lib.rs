//! Multichannel slotted-ALOHA networks: the rate model, the constrained
//! channel-selection game and its potential, closed-form benchmarks, and a
//! seeded slot-level simulator for the adaptive access algorithms.
//!
//! Conventions used throughout the crate:
//! - users are indexed `0..N`;
//! - channels are indexed `1..=K`, with channel `0` meaning "do not transmit";
//! - all logarithms in rate metrics and the potential are natural logs.

pub mod analytics;
pub mod error;
pub mod game;
pub mod model;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    ConstraintVector, RateReport, SingleChannelStrategy, StrategyProfile, UtilityMatrix,
};

/// e⁻¹, the target idle probability of a well-loaded channel.
pub const TARGET_IDLE: f64 = 0.367_879_441_171_442_33;

/// Tolerance used when comparing probabilities and rates.
pub const TOL: f64 = 1e-12;
