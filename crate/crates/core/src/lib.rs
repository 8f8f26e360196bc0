//! Cold-start recommendation from subword-token embeddings.

pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod seed;
pub mod tokenizer;

pub use error::{Error, ErrorCategory, LoadError, Result};
