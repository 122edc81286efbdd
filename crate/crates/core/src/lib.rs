//! Hybrid mix-and-match recommendation: a validated embedding catalog,
//! a visual-aware BPR matching model, generated-candidate ingestion,
//! threshold grounding of generated items onto catalog items, reference
//! loss kernels, and evaluation arithmetic.

pub mod candidates;
pub mod catalog;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod kernels;
pub mod metrics;
pub mod retrieval;
pub mod synth;
mod wire;

pub use error::{Error, Result};
