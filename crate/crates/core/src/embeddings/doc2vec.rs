//! Paragraph vectors (distributed bag of words) trained with negative
//! sampling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ports::fnv1a;
use crate::text::words;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextEmbedderConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negative: usize,
    pub alpha: f32,
    pub min_alpha: f32,
    pub min_count: usize,
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for TextEmbedderConfig {
    fn default() -> Self {
        TextEmbedderConfig {
            dim: super::EMBEDDING_DIM,
            epochs: 10,
            negative: 5,
            alpha: 0.025,
            min_alpha: 0.0001,
            min_count: 1,
            infer_epochs: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextEmbedder {
    cfg: TextEmbedderConfig,
    vocab: HashMap<String, usize>,
    /// Output word vectors, row-major `|V| x dim`.
    output: Vec<f32>,
    /// Cumulative unigram^0.75 distribution for negative sampling.
    noise_cdf: Vec<f64>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl TextEmbedder {
    pub fn train(corpus: &[String], cfg: TextEmbedderConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("text embedder corpus"));
        }
        let docs: Vec<Vec<String>> = corpus.iter().map(|d| words(d)).collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            for w in d {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= cfg.min_count)
            .collect();
        if kept.is_empty() {
            return Err(Error::Empty("text embedder vocabulary"));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let vocab: HashMap<String, usize> = kept
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.to_string(), i))
            .collect();
        let total: f64 = kept.iter().map(|(_, c)| (*c as f64).powf(0.75)).sum();
        let mut acc = 0.0;
        let noise_cdf = kept
            .iter()
            .map(|(_, c)| {
                acc += (*c as f64).powf(0.75) / total;
                acc
            })
            .collect();

        let mut model = TextEmbedder {
            output: vec![0.0; vocab.len() * cfg.dim],
            vocab,
            noise_cdf,
            cfg,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(model.cfg.seed);
        let ids: Vec<Vec<usize>> = docs.iter().map(|d| model.ids(d)).collect();
        let mut doc_vecs: Vec<Vec<f32>> = ids.iter().map(|_| model.init_vec(&mut rng)).collect();
        let epochs = model.cfg.epochs.max(1);
        for epoch in 0..epochs {
            let alpha = model.alpha_at(epoch, epochs);
            for (d, doc) in ids.iter().enumerate() {
                for &w in doc {
                    model.train_pair(&mut doc_vecs[d], w, alpha, &mut rng);
                }
            }
        }
        Ok(model)
    }

    fn ids(&self, toks: &[String]) -> Vec<usize> {
        toks.iter().filter_map(|t| self.vocab.get(t).copied()).collect()
    }

    fn init_vec(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let scale = 0.5 / self.cfg.dim as f32;
        (0..self.cfg.dim).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    fn alpha_at(&self, epoch: usize, epochs: usize) -> f32 {
        let frac = epoch as f32 / epochs as f32;
        self.cfg.alpha - (self.cfg.alpha - self.cfg.min_alpha) * frac
    }

    fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        let r: f64 = rng.gen();
        self.noise_cdf
            .partition_point(|c| *c < r)
            .min(self.noise_cdf.len() - 1)
    }

    fn draw_targets(&self, word: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, f32)> {
        let mut targets = vec![(word, 1.0)];
        for _ in 0..self.cfg.negative {
            let t = self.sample_noise(rng);
            if t != word {
                targets.push((t, 0.0));
            }
        }
        targets
    }

    /// One negative-sampling step. Returns the per-target output updates so
    /// training can apply them while inference discards them.
    fn step(&self, doc: &mut [f32], targets: &[(usize, f32)], alpha: f32) -> Vec<f32> {
        let dim = self.cfg.dim;
        let mut grad = vec![0f32; dim];
        let mut scales = Vec::with_capacity(targets.len());
        for &(t, label) in targets {
            let row = &self.output[t * dim..(t + 1) * dim];
            let dot: f32 = row.iter().zip(doc.iter()).map(|(a, b)| a * b).sum();
            let g = (label - sigmoid(dot)) * alpha;
            for i in 0..dim {
                grad[i] += g * row[i];
            }
            scales.push(g);
        }
        let before = doc.to_vec();
        doc.iter_mut().zip(grad).for_each(|(d, g)| *d += g);
        let mut updates = Vec::with_capacity(targets.len() * dim);
        for g in scales {
            updates.extend(before.iter().map(|x| g * x));
        }
        updates
    }

    fn train_pair(&mut self, doc: &mut [f32], word: usize, alpha: f32, rng: &mut ChaCha8Rng) {
        let dim = self.cfg.dim;
        let targets = self.draw_targets(word, rng);
        let updates = self.step(doc, &targets, alpha);
        for (k, &(t, _)) in targets.iter().enumerate() {
            let row = &mut self.output[t * dim..(t + 1) * dim];
            row.iter_mut().zip(&updates[k * dim..(k + 1) * dim]).for_each(|(r, u)| *r += u);
        }
    }

    /// Document vector inferred with frozen output weights. Deterministic per
    /// text; `None` when no token is in the vocabulary.
    pub fn embed(&self, text: &str) -> Option<Vec<f32>> {
        let ids = self.ids(&words(text));
        if ids.is_empty() {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ fnv1a(text.as_bytes()));
        let mut doc = self.init_vec(&mut rng);
        let epochs = self.cfg.infer_epochs.max(1);
        for epoch in 0..epochs {
            let alpha = self.alpha_at(epoch, epochs);
            for &w in &ids {
                let targets = self.draw_targets(w, &mut rng);
                self.step(&mut doc, &targets, alpha);
            }
        }
        Some(doc)
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }
}
