//! Conditioned source sequences and padded batches.

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use socq_core::{GroupLabel, GroupValue};

use crate::config::{ModelConfig, Variant};
use crate::error::{ModelError, Result};
use crate::nn::padding_mask;
use crate::vocab::{Vocab, BOS_ID, EOS_ID, PAD_ID, SOCIAL_EMB_ID, UNK_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub post_id: String,
    pub post_text: String,
    pub question: String,
    pub group: GroupLabel,
    #[serde(default)]
    pub asker_vec: Option<Vec<f32>>,
}

/// One encoder input. For the embedding variants the final position holds
/// the projected asker vector instead of a token.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSource {
    pub ids: Vec<u32>,
    pub vector_slot: Option<usize>,
    pub vector: Option<Vec<f32>>,
    pub group: GroupValue,
    /// The post had no tokens.
    pub degenerate: bool,
}

impl PreparedSource {
    /// Number of encoder positions.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `[GROUP]` + post, truncated to `max_source` including the group token.
/// Labels of another category still map to their own token; unlabeled
/// askers use the category's UNK token.
pub fn prepare_social_token_input(vocab: &Vocab, cfg: &ModelConfig, post_text: &str, label: &GroupLabel) -> Result<Vec<u32>> {
    let group = vocab
        .group_id(label)
        .ok_or_else(|| ModelError::Config("vocabulary has no group tokens".into()))?;
    let mut ids = vec![group];
    ids.extend(vocab.encode(post_text).into_iter().take(cfg.max_source - 1));
    Ok(ids)
}

/// Post + `[SOCIAL_EMB]` + vector slot. A missing vector becomes zeros and
/// the marker becomes `<unk>`.
pub fn prepare_social_embedding_input(
    vocab: &Vocab,
    cfg: &ModelConfig,
    post_text: &str,
    asker_vec: Option<&[f32]>,
) -> Result<(Vec<u32>, usize, Vec<f32>)> {
    let mut ids: Vec<u32> = vocab.encode(post_text).into_iter().take(cfg.max_source - 2).collect();
    let (marker, vector) = match asker_vec {
        Some(v) if v.len() == cfg.asker_dim => (SOCIAL_EMB_ID, v.to_vec()),
        Some(v) => return Err(ModelError::Input(format!("asker vector has {} dims, expected {}", v.len(), cfg.asker_dim))),
        None => (UNK_ID, vec![0.0; cfg.asker_dim]),
    };
    ids.push(marker);
    ids.push(PAD_ID);
    let slot = ids.len() - 1;
    Ok((ids, slot, vector))
}

pub fn prepare_source(
    vocab: &Vocab,
    cfg: &ModelConfig,
    post_text: &str,
    group: &GroupLabel,
    asker_vec: Option<&[f32]>,
) -> Result<PreparedSource> {
    let post_len = vocab.encode(post_text).len();
    let degenerate = post_len == 0;
    let mut out = PreparedSource { ids: Vec::new(), vector_slot: None, vector: None, group: group.value(), degenerate };
    match cfg.variant {
        Variant::SocialToken => out.ids = prepare_social_token_input(vocab, cfg, post_text, group)?,
        Variant::SubredditEmbedding | Variant::TextEmbedding => {
            let (ids, slot, v) = prepare_social_embedding_input(vocab, cfg, post_text, asker_vec)?;
            out.ids = ids;
            out.vector_slot = Some(slot);
            out.vector = Some(v);
        }
        Variant::TextOnly | Variant::SocialAttention => {
            out.ids = vocab.encode(post_text).into_iter().take(cfg.max_source).collect();
            if out.ids.is_empty() {
                out.ids.push(UNK_ID);
            }
        }
    }
    Ok(out)
}

/// Target ids ending in `</s>`, at most `max_target` long.
pub fn prepare_target(vocab: &Vocab, cfg: &ModelConfig, question: &str) -> Vec<u32> {
    let mut ids: Vec<u32> = vocab.encode(question).into_iter().take(cfg.max_target - 1).collect();
    ids.push(EOS_ID);
    ids
}

pub struct SourceBatch {
    pub ids: Tensor,
    /// `[B, 1, 1, T]` additive key mask.
    pub mask: Tensor,
    /// `[B, T, 1]`, 1 at vector slots.
    pub slots: Option<Tensor>,
    /// `[B, asker_dim]`.
    pub vectors: Option<Tensor>,
    pub groups: Vec<GroupValue>,
}

pub fn collate_sources(sources: &[&PreparedSource], dev: &Device) -> Result<SourceBatch> {
    let t = sources.iter().map(|s| s.len()).max().unwrap_or(1);
    let b = sources.len();
    let mut ids = Vec::with_capacity(b * t);
    let mut valid = Vec::with_capacity(b);
    for s in sources {
        ids.extend(s.ids.iter().copied().chain(std::iter::repeat(PAD_ID)).take(t));
        valid.push((0..t).map(|i| i < s.len()).collect::<Vec<_>>());
    }
    let (slots, vectors) = if sources.iter().any(|s| s.vector_slot.is_some()) {
        let mut slot = vec![0f32; b * t];
        let mut vecs = Vec::new();
        let dim = sources.iter().find_map(|s| s.vector.as_ref()).map_or(0, Vec::len);
        for (i, s) in sources.iter().enumerate() {
            if let Some(p) = s.vector_slot {
                slot[i * t + p] = 1.0;
            }
            match &s.vector {
                Some(v) => vecs.extend_from_slice(v),
                None => vecs.extend(std::iter::repeat(0.0).take(dim)),
            }
        }
        (Some(Tensor::from_vec(slot, (b, t, 1), dev)?), Some(Tensor::from_vec(vecs, (b, dim), dev)?))
    } else {
        (None, None)
    };
    Ok(SourceBatch {
        ids: Tensor::from_vec(ids, (b, t), dev)?,
        mask: padding_mask(&valid, dev)?,
        slots,
        vectors,
        groups: sources.iter().map(|s| s.group).collect(),
    })
}

pub struct TargetBatch {
    /// `[B, T]` decoder inputs starting with `<s>`.
    pub inputs: Tensor,
    /// Flat indices of non-padding label positions in `[B*T]`.
    pub positions: Tensor,
    /// Labels at those positions.
    pub labels: Tensor,
    pub count: usize,
}

pub fn collate_targets(targets: &[&Vec<u32>], dev: &Device) -> Result<TargetBatch> {
    let t = targets.iter().map(|x| x.len()).max().unwrap_or(1);
    let mut inputs = Vec::with_capacity(targets.len() * t);
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for (i, tgt) in targets.iter().enumerate() {
        let mut row = vec![BOS_ID];
        row.extend(&tgt[..tgt.len() - 1]);
        row.resize(t, PAD_ID);
        inputs.extend(row);
        for (j, &l) in tgt.iter().enumerate() {
            positions.push((i * t + j) as u32);
            labels.push(l);
        }
    }
    let count = labels.len();
    Ok(TargetBatch {
        inputs: Tensor::from_vec(inputs, (targets.len(), t), dev)?,
        positions: Tensor::new(positions.as_slice(), dev)?,
        labels: Tensor::new(labels.as_slice(), dev)?,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use socq_core::{GroupCategory, GroupValue};

    fn vocab() -> Vocab {
        Vocab::build(&["my loan rate is high", "what rate ?"], 1, true)
    }

    #[test]
    fn social_token_prefix_and_truncation() {
        let v = vocab();
        let mut cfg = ModelConfig::toy(Variant::SocialToken, GroupCategory::Expertise);
        let expert = GroupLabel::new(GroupCategory::Expertise, GroupValue::Expert).unwrap();
        let ids = prepare_social_token_input(&v, &cfg, "my loan rate", &expert).unwrap();
        assert_eq!(v.token(ids[0]), "{GROUP_EXPERTISE_Expert}");
        assert_eq!(ids.len(), 4);
        let unk = GroupLabel::unk(GroupCategory::Expertise);
        assert_eq!(v.token(prepare_social_token_input(&v, &cfg, "x", &unk).unwrap()[0]), "{GROUP_EXPERTISE_UNK}");
        cfg.max_source = 3;
        let ids = prepare_social_token_input(&v, &cfg, "my loan rate is high", &expert).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[0], v.group_id(&expert).unwrap());
    }

    #[test]
    fn social_embedding_layout() {
        let v = vocab();
        let cfg = ModelConfig::toy(Variant::TextEmbedding, GroupCategory::Time);
        let vec = vec![0.5f32; 100];
        let (ids, slot, out) = prepare_social_embedding_input(&v, &cfg, "my loan rate", Some(&vec)).unwrap();
        assert_eq!(ids.len(), 3 + 2);
        assert_eq!(slot, 4);
        assert_eq!(ids[3], SOCIAL_EMB_ID);
        assert_eq!(out, vec);
        let (ids, _, out) = prepare_social_embedding_input(&v, &cfg, "my loan rate", None).unwrap();
        assert_eq!(ids[3], UNK_ID);
        assert!(out.iter().all(|x| *x == 0.0));
        assert!(prepare_social_embedding_input(&v, &cfg, "x", Some(&[1.0; 3])).is_err());
    }

    #[test]
    fn targets_end_with_eos() {
        let v = vocab();
        let mut cfg = ModelConfig::toy(Variant::TextOnly, GroupCategory::Time);
        cfg.max_target = 3;
        let t = prepare_target(&v, &cfg, "what rate is it ?");
        assert_eq!(t.len(), 3);
        assert_eq!(*t.last().unwrap(), EOS_ID);
        let batch = collate_targets(&[&t, &vec![EOS_ID]], &Device::Cpu).unwrap();
        assert_eq!(batch.count, 4);
        assert_eq!(batch.inputs.to_vec2::<u32>().unwrap()[1], vec![BOS_ID, PAD_ID, PAD_ID]);
    }
}
