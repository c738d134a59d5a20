//! Turn annotated ECG records into object-detection datasets, evaluate
//! detector output against them, and replay records as real-time streams.

pub mod aami;
pub mod bbox;
pub mod config;
pub mod detect;
pub mod eval;
pub mod pipeline;
pub mod render;
pub mod split;
pub mod stream;
pub mod synth;
mod error;
pub mod wfdb;

pub use error::{Error, Result};
