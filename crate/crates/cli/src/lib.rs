//! Manifest-driven pipeline around `trajlab`: vocabulary, n-gram and
//! transformer training, checkpoint evaluation, analysis and export.

pub mod analyze;
pub mod error;
pub mod export;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, Result};
