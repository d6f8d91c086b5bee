//! A trainable question generator: vocabulary, parameters and network.

use std::collections::BTreeSet;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use socq_core::GroupLabel;

use crate::config::{ModelConfig, Variant};
use crate::error::{ModelError, Result};
use crate::input::{collate_sources, collate_targets, prepare_source, prepare_target, Example, PreparedSource};
use crate::params::ParamStore;
use crate::seq2seq::Seq2Seq;
use crate::vocab::Vocab;

/// A prepared (source, target) training pair.
#[derive(Debug, Clone)]
pub struct Pair {
    pub source: PreparedSource,
    pub target: Vec<u32>,
}

#[derive(Clone)]
pub struct QuestionModel {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub net: Seq2Seq,
    pub attention_layer: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training (index 0) and after each epoch.
    pub valid_loss: Vec<f64>,
    pub best_epoch: usize,
    pub attention_layer: Option<usize>,
    /// Best validation loss per candidate social attention layer.
    pub layer_search: Vec<(usize, f64)>,
}

impl TrainReport {
    pub fn best_valid_loss(&self) -> f64 {
        self.valid_loss.get(self.best_epoch).copied().unwrap_or(f64::INFINITY)
    }
}

impl QuestionModel {
    pub fn new(cfg: &ModelConfig, vocab: Vocab, attention_layer: Option<usize>) -> Result<Self> {
        Self::with_store(cfg, vocab, ParamStore::new(cfg.seed), attention_layer)
    }

    pub fn with_store(cfg: &ModelConfig, vocab: Vocab, mut store: ParamStore, attention_layer: Option<usize>) -> Result<Self> {
        if vocab.has_group_tokens() != (cfg.variant == Variant::SocialToken) {
            return Err(ModelError::Config(format!("vocabulary group tokens do not match variant {}", cfg.variant)));
        }
        let attention_layer = match cfg.variant {
            Variant::SocialAttention => Some(attention_layer.or(cfg.attention_layer).unwrap_or(1)),
            _ => None,
        };
        let net = Seq2Seq::new(cfg, vocab.len(), &mut store, attention_layer)?;
        Ok(QuestionModel { cfg: cfg.clone(), vocab, store, net, attention_layer })
    }

    /// Vocabulary over training posts and questions, with group tokens for
    /// the social-token variant.
    pub fn build_vocab(cfg: &ModelConfig, train: &[Example]) -> Vocab {
        let texts: Vec<&str> = train.iter().flat_map(|e| [e.post_text.as_str(), e.question.as_str()]).collect();
        Vocab::build(&texts, cfg.min_count, cfg.variant == Variant::SocialToken)
    }

    pub fn prepare_source(&self, post_text: &str, group: Option<&GroupLabel>, asker_vec: Option<&[f32]>) -> Result<PreparedSource> {
        let unk = GroupLabel::unk(self.cfg.category);
        prepare_source(&self.vocab, &self.cfg, post_text, group.unwrap_or(&unk), asker_vec)
    }

    pub fn prepare(&self, ex: &Example) -> Result<Pair> {
        Ok(Pair {
            source: self.prepare_source(&ex.post_text, Some(&ex.group), ex.asker_vec.as_deref())?,
            target: prepare_target(&self.vocab, &self.cfg, &ex.question),
        })
    }

    pub fn prepare_all(&self, examples: &[Example]) -> Result<Vec<Pair>> {
        examples.iter().map(|e| self.prepare(e)).collect()
    }

    fn batch_loss(&self, batch: &[&Pair]) -> Result<(Tensor, usize)> {
        let dev = self.net.device();
        let sources: Vec<&PreparedSource> = batch.iter().map(|p| &p.source).collect();
        let targets: Vec<&Vec<u32>> = batch.iter().map(|p| &p.target).collect();
        let src = collate_sources(&sources, dev)?;
        let tgt = collate_targets(&targets, dev)?;
        Ok((self.net.loss(&src, &tgt)?, tgt.count))
    }

    pub fn optimizer(&self) -> Result<AdamW> {
        let params = ParamsAdamW { lr: self.cfg.learning_rate, weight_decay: self.cfg.weight_decay, ..Default::default() };
        Ok(AdamW::new(self.store.all_vars(), params)?)
    }

    /// One optimizer update on `batch`; returns its loss.
    pub fn step(&self, opt: &mut AdamW, batch: &[&Pair]) -> Result<f64> {
        let (loss, _) = self.batch_loss(batch)?;
        opt.backward_step(&loss)?;
        Ok(loss.to_scalar::<f32>()? as f64)
    }

    /// One shuffled pass; returns the token-weighted mean loss.
    pub fn run_epoch(&self, opt: &mut AdamW, data: &[Pair], rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Pair> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, count) = self.batch_loss(&batch)?;
            opt.backward_step(&loss)?;
            total += loss.to_scalar::<f32>()? as f64 * count as f64;
            tokens += count;
        }
        Ok(total / tokens.max(1) as f64)
    }

    /// Token-weighted mean negative log-likelihood without updates.
    pub fn mean_nll(&self, data: &[Pair]) -> Result<f64> {
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in data.chunks(self.cfg.batch_size.max(8)) {
            let batch: Vec<&Pair> = chunk.iter().collect();
            let (loss, count) = self.batch_loss(&batch)?;
            total += loss.to_scalar::<f32>()? as f64 * count as f64;
            tokens += count;
        }
        if tokens == 0 {
            return Err(ModelError::EmptyDataset("no target tokens"));
        }
        Ok(total / tokens as f64)
    }

    /// Per-token NLLs of `pair.target`.
    pub fn pair_nlls(&self, pair: &Pair) -> Result<Vec<f64>> {
        let dev = self.net.device();
        let src = collate_sources(&[&pair.source], dev)?;
        let tgt = collate_targets(&[&pair.target], dev)?;
        let lp = self.net.label_log_probs(&src, &tgt)?.to_vec1::<f32>()?;
        Ok(lp.into_iter().map(|x| -(x as f64)).collect())
    }

    /// Trains for `cfg.epochs`, keeping the weights with the lowest
    /// validation loss.
    pub fn fit(&mut self, train: &[Pair], valid: &[Pair]) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(ModelError::EmptyDataset("training set"));
        }
        if valid.is_empty() {
            return Err(ModelError::EmptyDataset("validation set"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut opt = self.optimizer()?;
        let mut report = TrainReport { attention_layer: self.attention_layer, ..Default::default() };
        report.valid_loss.push(self.mean_nll(valid)?);
        let mut best = self.store.snapshot()?;
        for epoch in 1..=self.cfg.epochs {
            let loss = self.run_epoch(&mut opt, train, &mut rng)?;
            let v = self.mean_nll(valid)?;
            log::info!("{} epoch {epoch}: train {loss:.4} valid {v:.4}", self.cfg.variant);
            report.train_loss.push(loss);
            report.valid_loss.push(v);
            if v < report.valid_loss[report.best_epoch] {
                report.best_epoch = epoch;
                best = self.store.snapshot()?;
            }
        }
        self.store.restore(&best)?;
        Ok(report)
    }
}

/// Errors when any post id occurs in both splits.
pub fn check_disjoint(train: &[Example], valid: &[Example]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|e| e.post_id.as_str()).collect();
    match valid.iter().find(|e| ids.contains(e.post_id.as_str())) {
        Some(e) => Err(ModelError::Input(format!("post {} is in both training and validation data", e.post_id))),
        None => Ok(()),
    }
}

/// Full training: vocabulary from the training split, then one run per
/// candidate attention layer (social attention only), keeping the run with
/// the lowest validation loss.
pub fn train(cfg: &ModelConfig, train: &[Example], valid: &[Example]) -> Result<(QuestionModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyDataset("training set"));
    }
    if valid.is_empty() {
        return Err(ModelError::EmptyDataset("validation set"));
    }
    check_disjoint(train, valid)?;
    let vocab = QuestionModel::build_vocab(cfg, train);
    let layers: Vec<Option<usize>> = match cfg.variant {
        Variant::SocialAttention => cfg.layer_candidates().into_iter().map(Some).collect(),
        _ => vec![None],
    };
    let mut best: Option<(QuestionModel, TrainReport)> = None;
    let mut search = Vec::new();
    for layer in layers {
        let mut model = QuestionModel::new(cfg, vocab.clone(), layer)?;
        let tr = model.prepare_all(train)?;
        let va = model.prepare_all(valid)?;
        let report = model.fit(&tr, &va)?;
        if let Some(l) = layer {
            search.push((l, report.best_valid_loss()));
        }
        if best.as_ref().is_none_or(|(_, r)| report.best_valid_loss() < r.best_valid_loss()) {
            best = Some((model, report));
        }
    }
    let (model, mut report) = best.expect("at least one candidate");
    report.layer_search = search;
    Ok((model, report))
}

/// Splits examples by post id into (train, valid, test) with a seeded
/// shuffle of the distinct posts.
pub fn split_by_post(examples: &[Example], valid_frac: f64, test_frac: f64, seed: u64) -> (Vec<Example>, Vec<Example>, Vec<Example>) {
    let mut posts: Vec<&str> = examples.iter().map(|e| e.post_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    posts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = posts.len();
    let n_test = ((n as f64) * test_frac).round() as usize;
    let n_valid = ((n as f64) * valid_frac).round() as usize;
    let test: BTreeSet<&str> = posts[..n_test].iter().copied().collect();
    let valid: BTreeSet<&str> = posts[n_test..(n_test + n_valid).min(n)].iter().copied().collect();
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for e in examples {
        if test.contains(e.post_id.as_str()) {
            c.push(e.clone());
        } else if valid.contains(e.post_id.as_str()) {
            b.push(e.clone());
        } else {
            a.push(e.clone());
        }
    }
    (a, b, c)
}
