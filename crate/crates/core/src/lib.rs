//! Measuring how much an extractive QA model leans on spurious dataset
//! features.
//!
//! A heuristic assigns every evaluation sample a scalar attribute; the
//! dataset is split at a threshold on that attribute, the model is scored
//! on both halves with bootstrap resampling, and the gap between the
//! bootstrap quantile intervals is reported as the model's prediction bias.

pub mod corpus;
pub mod debias;
pub mod error;
pub mod heuristics;
pub mod lexicon;
pub mod report;
pub mod stats;
pub mod synth;
pub mod textproc;

pub use error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
