//! Grammar-learning trajectory lab: word-level corpora, n-gram and tiny
//! transformer language models, minimal-pair evaluation and the analysis
//! used to compare learning trajectories across models.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hash;
pub mod io;
pub mod lm;
pub mod ngram;
pub mod nlm;
pub mod synthetic;

pub use error::{Error, Result};
pub use lm::LanguageModel;
