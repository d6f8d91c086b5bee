//! Pre-norm encoder-decoder transformer with the conditioning hooks.

use candle_core::{Device, Tensor, D};
use candle_nn::ops::log_softmax;
use socq_core::GroupValue;

use crate::config::{ModelConfig, Variant};
use crate::error::{ModelError, Result};
use crate::input::{SourceBatch, TargetBatch};
use crate::nn::{causal_mask, FeedForward, LayerNorm, Linear, MultiHeadAttention, SocialAttention};
use crate::params::{Init, ParamStore};

#[derive(Clone)]
pub enum SelfAttention {
    Plain(MultiHeadAttention),
    Social(SocialAttention),
}

#[derive(Clone)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: SelfAttention,
    pub norm2: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, social: bool) -> Result<Self> {
        let attn_name = format!("{name}.attn");
        let attn = if social {
            SelfAttention::Social(SocialAttention::new(store, &attn_name, cfg.model_dim, cfg.heads, cfg.category)?)
        } else {
            SelfAttention::Plain(MultiHeadAttention::new(store, &attn_name, cfg.model_dim, cfg.heads)?)
        };
        Ok(EncoderLayer {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), cfg.model_dim)?,
            attn,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), cfg.model_dim)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg.model_dim, cfg.ff_dim)?,
        })
    }

    /// Returns the layer output and, for plain attention, its weights.
    pub fn forward(&self, x: &Tensor, mask: &Tensor, groups: &[GroupValue]) -> Result<(Tensor, Option<Tensor>)> {
        let h = self.norm1.forward(x)?;
        let (a, weights) = match &self.attn {
            SelfAttention::Plain(m) => {
                let (a, w) = m.forward(&h, &h, Some(mask))?;
                (a, Some(w))
            }
            SelfAttention::Social(s) => (s.forward(&h, groups, mask)?, None),
        };
        let x = (x + a)?;
        let y = self.ff.forward(&self.norm2.forward(&x)?)?;
        Ok(((x + y)?, weights))
    }
}

#[derive(Clone)]
struct DecoderLayer {
    norm1: LayerNorm,
    self_attn: MultiHeadAttention,
    norm2: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.model_dim;
        Ok(DecoderLayer {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d)?,
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d, cfg.heads)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d)?,
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), d, cfg.heads)?,
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), d, cfg.ff_dim)?,
        })
    }

    fn forward(&self, x: &Tensor, memory: &Tensor, self_mask: &Tensor, mem_mask: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, Some(self_mask))?.0)?;
        let h = self.norm2.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, Some(mem_mask))?.0)?;
        let y = self.ff.forward(&self.norm3.forward(&x)?)?;
        Ok((x + y)?)
    }
}

/// Encoder output plus the first layer's attention weights when available.
pub struct Encoded {
    pub memory: Tensor,
    pub mask: Tensor,
    pub first_layer_attention: Option<Tensor>,
}

#[derive(Clone)]
pub struct Seq2Seq {
    pub cfg: ModelConfig,
    pub vocab_size: usize,
    tok_emb: Tensor,
    out_bias: Tensor,
    src_pos: Tensor,
    tgt_pos: Tensor,
    pub encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    pub projector: Option<Linear>,
}

pub const PROJECTOR: &str = "projector";

impl Seq2Seq {
    /// Builds the network, creating parameters missing from `store`.
    /// `attention_layer` is the 1-based encoder layer that becomes social
    /// attention for that variant.
    pub fn new(cfg: &ModelConfig, vocab_size: usize, store: &mut ParamStore, attention_layer: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let social_layer = match cfg.variant {
            Variant::SocialAttention => {
                let l = attention_layer.or(cfg.attention_layer).unwrap_or(1);
                if l == 0 || l > cfg.layers {
                    return Err(ModelError::Config(format!("attention layer {l} outside 1..={}", cfg.layers)));
                }
                Some(l)
            }
            _ => None,
        };
        let encoder = (0..cfg.layers)
            .map(|i| EncoderLayer::new(store, &format!("encoder.{i}"), cfg, social_layer == Some(i + 1)))
            .collect::<Result<_>>()?;
        let decoder = (0..cfg.layers)
            .map(|i| DecoderLayer::new(store, &format!("decoder.{i}"), cfg))
            .collect::<Result<_>>()?;
        let projector = if cfg.variant.uses_asker_vector() {
            Some(Linear::new(store, PROJECTOR, cfg.asker_dim, d, true)?)
        } else {
            None
        };
        Ok(Seq2Seq {
            cfg: cfg.clone(),
            vocab_size,
            tok_emb: store.get("embed.tokens", &[vocab_size, d], Init::Uniform(0.1))?,
            out_bias: store.get("embed.out_bias", &[vocab_size], Init::Zeros)?,
            src_pos: store.get("embed.src_pos", &[cfg.positions(), d], Init::Uniform(0.1))?,
            tgt_pos: store.get("embed.tgt_pos", &[cfg.positions(), d], Init::Uniform(0.1))?,
            encoder,
            enc_norm: LayerNorm::new(store, "encoder.norm", d)?,
            decoder,
            dec_norm: LayerNorm::new(store, "decoder.norm", d)?,
            projector,
        })
    }

    pub fn device(&self) -> &Device {
        self.tok_emb.device()
    }

    fn embed(&self, ids: &Tensor, pos: &Tensor) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let x = self.tok_emb.index_select(&ids.flatten_all()?, 0)?.reshape((b, t, self.cfg.model_dim))?;
        Ok(x.broadcast_add(&pos.narrow(0, 0, t)?)?)
    }

    /// Encoder input embeddings (`[B, T, D]`), with projected asker vectors
    /// written into their slots.
    pub fn source_embeddings(&self, src: &SourceBatch) -> Result<Tensor> {
        let t = src.ids.dim(1)?;
        let tokens = self.embed(&src.ids, &self.src_pos)?;
        match (&self.projector, &src.slots, &src.vectors) {
            (Some(proj), Some(slots), Some(vectors)) => {
                let projected = proj.forward(vectors)?.unsqueeze(1)?;
                let keep = (1.0 - slots)?;
                let pos = self.src_pos.narrow(0, 0, t)?.unsqueeze(0)?;
                let slot_values = projected.broadcast_add(&pos)?.broadcast_mul(slots)?;
                Ok((tokens.broadcast_mul(&keep)? + slot_values)?)
            }
            (Some(_), _, _) => Err(ModelError::Input("embedding variant requires asker vectors".into())),
            _ => Ok(tokens),
        }
    }

    pub fn encode(&self, src: &SourceBatch) -> Result<Encoded> {
        let mut x = self.source_embeddings(src)?;
        let mut first = None;
        for (i, layer) in self.encoder.iter().enumerate() {
            let (y, w) = layer.forward(&x, &src.mask, &src.groups)?;
            if i == 0 {
                first = w;
            }
            x = y;
        }
        Ok(Encoded { memory: self.enc_norm.forward(&x)?, mask: src.mask.clone(), first_layer_attention: first })
    }

    /// Logits `[B, T, V]` for decoder inputs `[B, T]`.
    pub fn decode(&self, enc: &Encoded, inputs: &Tensor) -> Result<Tensor> {
        let t = inputs.dim(1)?;
        let mut x = self.embed(inputs, &self.tgt_pos)?;
        let causal = causal_mask(t, self.device())?;
        for layer in &self.decoder {
            x = layer.forward(&x, &enc.memory, &causal, &enc.mask)?;
        }
        let h = self.dec_norm.forward(&x)?;
        Ok(h.broadcast_matmul(&self.tok_emb.t()?)?.broadcast_add(&self.out_bias)?)
    }

    /// Log-probabilities of each target label, flattened in batch order.
    pub fn label_log_probs(&self, src: &SourceBatch, tgt: &TargetBatch) -> Result<Tensor> {
        let enc = self.encode(src)?;
        let logits = self.decode(&enc, &tgt.inputs)?;
        let v = logits.dim(D::Minus1)?;
        let flat = logits.reshape(((), v))?.index_select(&tgt.positions, 0)?;
        let logp = log_softmax(&flat, D::Minus1)?;
        Ok(logp.gather(&tgt.labels.unsqueeze(1)?, 1)?.squeeze(1)?)
    }

    /// Mean token cross-entropy.
    pub fn loss(&self, src: &SourceBatch, tgt: &TargetBatch) -> Result<Tensor> {
        Ok(self.label_log_probs(src, tgt)?.mean_all()?.neg()?)
    }
}
