//! Transformer building blocks.

use candle_core::{Device, Module, Tensor, D};
use candle_nn::ops::{layer_norm_slow, softmax};
use socq_core::{GroupCategory, GroupValue};

use crate::error::Result;
use crate::params::{Init, ParamStore};

/// Additive mask value for blocked attention positions.
pub const NEG_INF: f32 = -1e9;

#[derive(Clone)]
pub struct Linear {
    inner: candle_nn::Linear,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let w = store.get(&format!("{name}.weight"), &[d_out, d_in], Init::Xavier)?;
        let b = if bias { Some(store.get(&format!("{name}.bias"), &[d_out], Init::Zeros)?) } else { None };
        Ok(Linear { inner: candle_nn::Linear::new(w, b) })
    }

    pub fn weight(&self) -> &Tensor {
        self.inner.weight()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(x)?)
    }
}

#[derive(Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.get(&format!("{name}.gamma"), &[dim], Init::Ones)?,
            beta: store.get(&format!("{name}.beta"), &[dim], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(layer_norm_slow(x, &self.gamma, &self.beta, 1e-5)?)
    }
}

#[derive(Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, true)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, true)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, true)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, true)?,
            heads,
        })
    }

    /// `query` is `[B, Tq, D]`, `memory` `[B, Tk, D]`, `mask` broadcastable
    /// to `[B, H, Tq, Tk]`. Returns the output and the attention weights
    /// `[B, H, Tq, Tk]`.
    pub fn forward(&self, query: &Tensor, memory: &Tensor, mask: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let (b, tq, d) = query.dims3()?;
        let tk = memory.dim(1)?;
        let dh = d / self.heads;
        let split = |x: Tensor, t: usize| -> Result<Tensor> {
            Ok(x.reshape((b, t, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(query)?, tq)?;
        let k = split(self.k.forward(memory)?, tk)?;
        let v = split(self.v.forward(memory)?, tk)?;
        let mut scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (dh as f64).sqrt()))?;
        if let Some(m) = mask {
            scores = scores.broadcast_add(m)?;
        }
        let attn = softmax(&scores, D::Minus1)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, tq, d))?;
        Ok((self.o.forward(&out)?, attn))
    }
}

#[derive(Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, true)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu_erf()?)
    }
}

/// Per-group attention modules next to a generic one, merged by a learned
/// map `f: 2D -> D` over their concatenated outputs. Each batch row only
/// runs through the module of its own group, so other groups' modules get
/// no gradient from it.
#[derive(Clone)]
pub struct SocialAttention {
    category: GroupCategory,
    groups: Vec<(GroupValue, MultiHeadAttention)>,
    generic: MultiHeadAttention,
    merge: Linear,
}

impl SocialAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, category: GroupCategory) -> Result<Self> {
        let groups = category
            .values()
            .into_iter()
            .map(|v| Ok((v, MultiHeadAttention::new(store, &format!("{name}.group.{v}"), dim, heads)?)))
            .collect::<Result<_>>()?;
        let generic = MultiHeadAttention::new(store, &format!("{name}.generic"), dim, heads)?;
        let merge_name = format!("{name}.merge.weight");
        let fresh = store.var(&merge_name).is_none();
        let merge = Linear::new(store, &format!("{name}.merge"), 2 * dim, dim, false)?;
        if fresh {
            store.set(&merge_name, &averaging_map(dim, store.device())?)?;
        }
        Ok(SocialAttention { category, groups, generic, merge })
    }

    /// Parameter-name prefix of one group's module.
    pub fn group_prefix(name: &str, value: GroupValue) -> String {
        format!("{name}.group.{value}")
    }

    fn route(&self, value: GroupValue) -> GroupValue {
        if self.category.admits(value) {
            value
        } else {
            GroupValue::UNK
        }
    }

    pub fn forward(&self, x: &Tensor, groups: &[GroupValue], mask: &Tensor) -> Result<Tensor> {
        let b = x.dim(0)?;
        let dev = x.device();
        let (generic, _) = self.generic.forward(x, x, Some(mask))?;
        let mut order: Vec<u32> = Vec::with_capacity(b);
        let mut pieces = Vec::new();
        for (value, module) in &self.groups {
            let idx: Vec<u32> = (0..b).filter(|&i| self.route(groups[i]) == *value).map(|i| i as u32).collect();
            if idx.is_empty() {
                continue;
            }
            let it = Tensor::new(idx.as_slice(), dev)?;
            let xs = x.index_select(&it, 0)?;
            let ms = mask.index_select(&it, 0)?;
            pieces.push(module.forward(&xs, &xs, Some(&ms))?.0);
            order.extend(idx);
        }
        let mut inverse = vec![0u32; b];
        for (pos, &i) in order.iter().enumerate() {
            inverse[i as usize] = pos as u32;
        }
        let grouped = Tensor::cat(&pieces, 0)?.index_select(&Tensor::new(inverse.as_slice(), dev)?, 0)?;
        self.merge.forward(&Tensor::cat(&[&grouped, &generic], D::Minus1)?)
    }
}

/// `[I/2 I/2]`: the mean of the two concatenated halves.
pub fn averaging_map(dim: usize, dev: &Device) -> Result<Tensor> {
    let half = (Tensor::eye(dim, candle_core::DType::F32, dev)? * 0.5)?;
    Ok(Tensor::cat(&[&half, &half], 1)?)
}

/// `[B, 1, 1, T]` additive mask that blocks padded key positions.
pub fn padding_mask(valid: &[Vec<bool>], dev: &Device) -> Result<Tensor> {
    let b = valid.len();
    let t = valid.first().map_or(0, Vec::len);
    let data: Vec<f32> = valid.iter().flat_map(|row| row.iter().map(|&ok| if ok { 0.0 } else { NEG_INF })).collect();
    Ok(Tensor::from_vec(data, (b, 1, 1, t), dev)?)
}

/// `[1, 1, T, T]` additive mask that blocks future positions.
pub fn causal_mask(t: usize, dev: &Device) -> Result<Tensor> {
    let data: Vec<f32> = (0..t).flat_map(|i| (0..t).map(move |j| if j > i { NEG_INF } else { 0.0 })).collect();
    Ok(Tensor::from_vec(data, (1, 1, t, t), dev)?)
}
