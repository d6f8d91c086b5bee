use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use socq_core::GroupCategory;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    TextOnly,
    SocialToken,
    SocialAttention,
    SubredditEmbedding,
    TextEmbedding,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::TextOnly,
        Variant::SocialToken,
        Variant::SocialAttention,
        Variant::SubredditEmbedding,
        Variant::TextEmbedding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::TextOnly => "text_only",
            Variant::SocialToken => "social_token",
            Variant::SocialAttention => "social_attention",
            Variant::SubredditEmbedding => "subreddit_embedding",
            Variant::TextEmbedding => "text_embedding",
        }
    }

    pub fn uses_asker_vector(self) -> bool {
        matches!(self, Variant::SubredditEmbedding | Variant::TextEmbedding)
    }

    pub fn is_conditioned(self) -> bool {
        self != Variant::TextOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| ModelError::Config(format!("unknown variant {s:?}")))
    }
}

/// Candidate encoder layers (1-based) for the social attention module when
/// none is fixed.
pub const ATTENTION_LAYER_CANDIDATES: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Category whose group labels condition the model.
    pub category: GroupCategory,
    pub base_model: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_source: usize,
    pub max_target: usize,
    /// 1-based encoder layer replaced by social attention; `None` selects
    /// from [`ATTENTION_LAYER_CANDIDATES`] on validation loss.
    pub attention_layer: Option<usize>,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub beam_width: usize,
    pub asker_dim: usize,
    pub min_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Training settings from the original study at full width.
    pub fn paper(variant: Variant, category: GroupCategory) -> Self {
        ModelConfig {
            variant,
            category,
            base_model: "scratch".into(),
            learning_rate: 1e-4,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 2,
            max_source: 1024,
            max_target: 64,
            attention_layer: Some(1),
            model_dim: 768,
            layers: 6,
            heads: 12,
            ff_dim: 3072,
            beam_width: 4,
            asker_dim: socq_core::embeddings::EMBEDDING_DIM,
            min_count: 2,
            seed: 1,
        }
    }

    /// Two layers at width 64; trains on a laptop CPU in seconds.
    pub fn toy(variant: Variant, category: GroupCategory) -> Self {
        ModelConfig {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 16,
            max_source: 128,
            model_dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            min_count: 1,
            ..Self::paper(variant, category)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.model_dim == 0 || self.heads == 0 || self.model_dim % self.heads != 0 {
            return bad(format!("model_dim {} not divisible by heads {}", self.model_dim, self.heads));
        }
        if self.layers == 0 {
            return bad("at least one layer required".into());
        }
        if self.max_source < 3 || self.max_target < 2 {
            return bad("max_source must be ≥ 3 and max_target ≥ 2".into());
        }
        if self.beam_width == 0 || self.batch_size == 0 {
            return bad("beam_width and batch_size must be positive".into());
        }
        if let Some(l) = self.attention_layer {
            if l == 0 || l > self.layers {
                return bad(format!("attention_layer {l} outside 1..={}", self.layers));
            }
        }
        Ok(())
    }

    /// Layer candidates that exist in this encoder.
    pub fn layer_candidates(&self) -> Vec<usize> {
        match self.attention_layer {
            Some(l) => vec![l],
            None => ATTENTION_LAYER_CANDIDATES.into_iter().filter(|l| *l <= self.layers).collect(),
        }
    }

    pub fn positions(&self) -> usize {
        self.max_source.max(self.max_target)
    }
}
