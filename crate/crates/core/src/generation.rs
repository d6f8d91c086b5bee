//! Interfaces that sequence-to-sequence model implementations provide to the
//! evaluation, human-eval and serving layers.

use crate::error::{Error, Result};
use crate::groups::GroupLabel;

/// Produces one clarification question for a post. `group` is ignored by
/// text-only models.
pub trait QuestionGenerator: Send + Sync {
    fn generate(&self, post_text: &str, group: Option<&GroupLabel>) -> Result<String>;
}

/// Teacher-forced scoring: per-token negative log-likelihoods (natural log)
/// of `target` given `source`, including the end-of-sequence token.
pub trait SequenceScorer: Send + Sync {
    fn token_nlls(&self, source: &str, target: &str, group: Option<&GroupLabel>) -> Result<Vec<f64>>;
}

/// Scores every target token as `1/V`. Perplexity under it is exactly `V`.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl SequenceScorer for UniformScorer {
    fn token_nlls(&self, _source: &str, target: &str, _group: Option<&GroupLabel>) -> Result<Vec<f64>> {
        if self.vocab_size == 0 {
            return Err(Error::InvalidInput("vocabulary size 0".into()));
        }
        let n = crate::text::words(target).len() + 1;
        Ok(vec![(self.vocab_size as f64).ln(); n])
    }
}

/// Echoes a fixed question, optionally keyed by group value. Used in tests
/// and for wiring checks.
#[derive(Debug, Clone, Default)]
pub struct FixedGenerator {
    pub default: String,
    pub by_group: Vec<(GroupLabel, String)>,
}

impl QuestionGenerator for FixedGenerator {
    fn generate(&self, post_text: &str, group: Option<&GroupLabel>) -> Result<String> {
        if post_text.trim().is_empty() {
            return Err(Error::Generation("empty post".into()));
        }
        if let Some(g) = group {
            if let Some((_, q)) = self.by_group.iter().find(|(l, _)| l == g) {
                return Ok(q.clone());
            }
        }
        Ok(self.default.clone())
    }
}
