//! Side-channel PIN inference from browser motion and orientation streams.
//!
//! The crate covers the whole offline pipeline: synthetic session generation,
//! session ingestion and segmentation, the 114-feature extractor, a one-hidden
//! layer classifier trained with scaled conjugate gradient, top-k evaluation,
//! and coarse activity/call detection. See `examples/` for one runnable
//! program per capability.

pub mod activity;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod reference;
pub mod synth;

pub use error::{Error, Result};
