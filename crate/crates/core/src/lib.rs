//! Multi-granularity speech unit alignment and Parkinson's disease speech
//! classification.
//!
//! The crate covers the path from frame-level model outputs to subject-level
//! metrics:
//!
//! - [`vad`]: speech segments from per-frame speech probabilities
//! - [`ctc`]: Viterbi forced alignment of phonemes, word composition
//! - [`syllable`]: sonority-based syllabification and syllable timing
//! - [`dataset`]: filtering, speaker-independent splits, padded batches
//! - [`model`]: BiLSTM + attention pooling classifier and its training loop
//! - [`eval`]: subject aggregation, metrics, seed summaries, attention rankings
//! - [`pipeline`]: the stages chained over a corpus directory
//!
//! Matrices travel in the [`fmat`] container, unit streams as NDJSON.

pub mod ctc;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fmat;
pub mod model;
pub mod ndjson;
pub mod pipeline;
pub mod synth;
pub mod syllable;
pub mod units;
pub mod vad;

pub use error::{Error, Result};
pub use units::{AlignedUnit, Granularity};
