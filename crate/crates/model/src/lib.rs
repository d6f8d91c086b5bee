//! Encoder-decoder transformer that writes clarification questions for a
//! post, optionally conditioned on the asker's social group via a group
//! token, group-specific attention, or an appended asker embedding.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod input;
pub mod model;
pub mod nn;
pub mod params;
pub mod seq2seq;
pub mod synth;
pub mod vocab;

pub use attention::{attention_ratio, TokenAttention};
pub use config::{ModelConfig, Variant};
pub use decode::Generated;
pub use error::{ModelError, Result};
pub use input::Example;
pub use model::{split_by_post, train, Pair, QuestionModel, TrainReport};
pub use vocab::Vocab;
