//! Conversation-group detection and forecasting.
//!
//! A joint LSTM reads per-pair features of everyone around a focal person
//! and predicts how likely each of them shares the focal person's group.
//! Dominant-set clustering turns the resulting affinity matrix into groups,
//! and per-edge Gaussian processes extrapolate affinities to forecast
//! future groups.

pub mod dominant_set;
pub mod error;
pub mod eval;
pub mod features;
pub mod forecast;
pub mod net;
pub mod pipeline;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
