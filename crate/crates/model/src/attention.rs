//! Token-level attention contrast between two group tokens.

use serde::{Deserialize, Serialize};
use socq_core::{GroupCategory, GroupLabel};

use crate::config::Variant;
use crate::error::{ModelError, Result};
use crate::input::{collate_sources, prepare_social_token_input, PreparedSource};
use crate::model::QuestionModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttention {
    pub token: String,
    pub score_g1: f64,
    pub score_g2: f64,
    pub ratio: f64,
}

/// Runs the post once with each of the category's two group tokens and
/// compares how much attention each post token receives in the first
/// encoder layer (mean over heads and query positions). Both score vectors
/// are normalized to sum to 1 over the post tokens; the group token itself
/// is left out.
pub fn attention_ratio(model: &QuestionModel, post_text: &str, category: GroupCategory) -> Result<Vec<TokenAttention>> {
    if model.cfg.variant != Variant::SocialToken {
        return Err(ModelError::Config(format!("attention ratio needs a social_token model, not {}", model.cfg.variant)));
    }
    let [v1, v2] = category.pair();
    let prepare = |v| -> Result<PreparedSource> {
        let label = GroupLabel::new(category, v)?;
        Ok(PreparedSource {
            ids: prepare_social_token_input(&model.vocab, &model.cfg, post_text, &label)?,
            vector_slot: None,
            vector: None,
            group: v,
            degenerate: false,
        })
    };
    let (a, b) = (prepare(v1)?, prepare(v2)?);
    let src = collate_sources(&[&a, &b], model.net.device())?;
    let enc = model.net.encode(&src)?;
    let weights = enc
        .first_layer_attention
        .ok_or_else(|| ModelError::Config("first encoder layer has no plain attention".into()))?;
    // [2, H, Tq, Tk] -> [2, Tk]
    let per_key = weights.mean(1)?.mean(1)?.to_vec2::<f32>()?;
    let normalize = |row: &[f32]| -> Vec<f64> {
        let post = &row[1..];
        let total: f64 = post.iter().map(|x| *x as f64).sum();
        post.iter().map(|x| *x as f64 / total).collect()
    };
    let (s1, s2) = (normalize(&per_key[0]), normalize(&per_key[1]));
    Ok(a.ids[1..]
        .iter()
        .zip(s1.into_iter().zip(s2))
        .map(|(&id, (x, y))| TokenAttention { token: model.vocab.token(id).to_string(), score_g1: x, score_g2: y, ratio: x / y })
        .collect())
}
