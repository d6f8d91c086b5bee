//! Building blocks for socially-aware clarification question generation.
//!
//! The crate covers everything around the sequence-to-sequence model itself:
//! reading forum archives, extracting information-seeking questions, labeling
//! question-askers with social groups, building asker embeddings, validating
//! group differences, scoring generated questions and packaging human
//! evaluation studies. Model implementations plug in through the traits in
//! [`generation`].

pub mod analysis;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod generation;
pub mod groups;
pub mod humaneval;
pub mod ingest;
pub mod ports;
pub mod profile;
pub mod questions;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
pub use groups::{GroupCategory, GroupLabel, GroupValue};
