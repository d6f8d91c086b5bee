//! Deterministic beam search.

use candle_core::{Tensor, D};
use candle_nn::ops::log_softmax;
use serde::{Deserialize, Serialize};
use socq_core::generation::{QuestionGenerator, SequenceScorer};
use socq_core::GroupLabel;

use crate::error::Result;
use crate::input::{collate_sources, prepare_target, PreparedSource};
use crate::model::{Pair, QuestionModel};
use crate::seq2seq::Encoded;
use crate::vocab::{BOS_ID, EOS_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub text: String,
    pub token_ids: Vec<u32>,
    /// Source post had no tokens.
    pub degenerate: bool,
}

#[derive(Clone)]
struct Beam {
    tokens: Vec<u32>,
    score: f64,
}

impl QuestionModel {
    /// Beam search of width `cfg.beam_width`. Emits at most
    /// `max_target - 1` tokens before `</s>` and never ends on the first
    /// step, so the output is never empty.
    pub fn beam_search(&self, source: &PreparedSource) -> Result<Vec<u32>> {
        let dev = self.net.device();
        let src = collate_sources(&[source], dev)?;
        let enc = self.net.encode(&src)?;
        let width = self.cfg.beam_width;
        let blocked = self.vocab.non_output_ids();
        let max_len = self.cfg.max_target - 1;
        let mut alive = vec![Beam { tokens: Vec::new(), score: 0.0 }];
        let mut finished: Vec<Beam> = Vec::new();
        for step in 0..=max_len {
            let k = alive.len();
            let inputs: Vec<u32> = alive.iter().flat_map(|b| std::iter::once(BOS_ID).chain(b.tokens.iter().copied())).collect();
            let inputs = Tensor::from_vec(inputs, (k, step + 1), dev)?;
            let expanded = Encoded {
                memory: enc.memory.repeat((k, 1, 1))?,
                mask: enc.mask.repeat((k, 1, 1, 1))?,
                first_layer_attention: None,
            };
            let logits = self.net.decode(&expanded, &inputs)?;
            let last = logits.narrow(1, step, 1)?.squeeze(1)?;
            let logp = log_softmax(&last, D::Minus1)?.to_vec2::<f32>()?;
            let mut cands: Vec<(f64, usize, u32)> = Vec::new();
            for (bi, row) in logp.iter().enumerate() {
                let base = alive[bi].score;
                if step == max_len {
                    cands.push((base + row[EOS_ID as usize] as f64, bi, EOS_ID));
                    continue;
                }
                let mut ranked: Vec<(u32, f32)> = row
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (i as u32, p))
                    .filter(|(i, _)| !blocked.contains(i) && !(step == 0 && *i == EOS_ID))
                    .collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                cands.extend(ranked.into_iter().take(width).map(|(tok, p)| (base + p as f64, bi, tok)));
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::new();
            for (score, bi, tok) in cands {
                let mut tokens = alive[bi].tokens.clone();
                if tok == EOS_ID {
                    finished.push(Beam { tokens, score });
                } else {
                    tokens.push(tok);
                    next.push(Beam { tokens, score });
                    if next.len() == width {
                        break;
                    }
                }
            }
            let best_done = finished.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = next.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
            let done = next.is_empty() || finished.len() >= width || best_done >= best_alive;
            alive = next;
            if done {
                break;
            }
        }
        let pool = if finished.is_empty() { alive } else { finished };
        let best = pool
            .into_iter()
            .max_by(|a, b| a.score.total_cmp(&b.score).then(b.tokens.cmp(&a.tokens)))
            .expect("beam search keeps at least one hypothesis");
        Ok(best.tokens)
    }

    pub fn generate_full(&self, post_text: &str, group: Option<&GroupLabel>, asker_vec: Option<&[f32]>) -> Result<Generated> {
        let source = self.prepare_source(post_text, group, asker_vec)?;
        let ids = self.beam_search(&source)?;
        Ok(Generated { text: self.vocab.decode(&ids), token_ids: ids, degenerate: source.degenerate })
    }
}

impl QuestionGenerator for QuestionModel {
    fn generate(&self, post_text: &str, group: Option<&GroupLabel>) -> socq_core::Result<String> {
        Ok(self.generate_full(post_text, group, None)?.text)
    }
}

impl SequenceScorer for QuestionModel {
    fn token_nlls(&self, source: &str, target: &str, group: Option<&GroupLabel>) -> socq_core::Result<Vec<f64>> {
        let pair = Pair {
            source: self.prepare_source(source, group, None)?,
            target: prepare_target(&self.vocab, &self.cfg, target),
        };
        Ok(self.pair_nlls(&pair)?)
    }
}
