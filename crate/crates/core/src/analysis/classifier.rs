use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Pca;
use crate::error::{Error, Result};
use crate::groups::{GroupCategory, GroupValue};
use crate::ports::SentenceEncoder;

#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    pub question_vec: Vec<f32>,
    pub post_vec: Vec<f32>,
}

impl PairFeature {
    /// Question part first.
    pub fn concatenated(&self) -> Vec<f32> {
        self.question_vec.iter().chain(&self.post_vec).copied().collect()
    }
}

pub fn encode_pair(
    item_id: &str,
    question: &str,
    post: &str,
    encoder: &dyn SentenceEncoder,
    pca_q: &Pca,
    pca_p: &Pca,
) -> Result<PairFeature> {
    let wrap = |e: Error| Error::Encoder { item: item_id.to_string(), reason: e.to_string() };
    let q = encoder.encode(question).map_err(wrap)?;
    let p = encoder.encode(post).map_err(wrap)?;
    Ok(PairFeature {
        question_vec: pca_q.transform(&q)?,
        post_vec: pca_p.transform(&p)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { hidden: 64, epochs: 100, learning_rate: 0.01, batch_size: 32, seed: 17 }
    }
}

/// One hidden ReLU layer and a two-way softmax over the category's values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupClassifier {
    pub category: GroupCategory,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: [Vec<f64>; 2],
    b2: [f64; 2],
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
        for (i, p) in params.iter_mut().enumerate() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            **p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

impl GroupClassifier {
    /// Trains on rows labeled with the category's two non-UNK values; UNK
    /// rows are skipped. The minority class is duplicated to parity.
    pub fn train(category: GroupCategory, rows: &[(Vec<f32>, GroupValue)], cfg: &ClassifierConfig) -> Result<Self> {
        let [v0, v1] = category.pair();
        let mut class: [Vec<&Vec<f32>>; 2] = [Vec::new(), Vec::new()];
        for (x, v) in rows {
            if *v == v0 {
                class[0].push(x);
            } else if *v == v1 {
                class[1].push(x);
            }
        }
        if class[0].is_empty() || class[1].is_empty() {
            return Err(Error::SingleClass(format!("{} classifier needs both {v0} and {v1}", category.as_str())));
        }
        let dim = class[0][0].len();
        if class.iter().flatten().any(|x| x.len() != dim) {
            return Err(Error::InvalidInput("ragged classifier features".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut data: Vec<(&Vec<f32>, usize)> = Vec::new();
        for (c, xs) in class.iter().enumerate() {
            data.extend(xs.iter().map(|x| (*x, c)));
        }
        let (small, large) = if class[0].len() < class[1].len() { (0, 1) } else { (1, 0) };
        for _ in class[small].len()..class[large].len() {
            data.push((class[small][rng.gen_range(0..class[small].len())], small));
        }

        let h = cfg.hidden.max(1);
        let s1 = (2.0 / dim as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        let mut model = GroupClassifier {
            category,
            w1: (0..h).map(|_| (0..dim).map(|_| rng.gen_range(-s1..s1)).collect()).collect(),
            b1: vec![0.0; h],
            w2: [
                (0..h).map(|_| rng.gen_range(-s2..s2)).collect(),
                (0..h).map(|_| rng.gen_range(-s2..s2)).collect(),
            ],
            b2: [0.0; 2],
        };
        let n_params = h * dim + h + 2 * h + 2;
        let mut adam = Adam::new(n_params);
        let batch = cfg.batch_size.max(1);
        for _ in 0..cfg.epochs {
            data.shuffle(&mut rng);
            for chunk in data.chunks(batch) {
                let grads = model.gradients(chunk);
                let mut params: Vec<&mut f64> = Vec::with_capacity(n_params);
                params.extend(model.w1.iter_mut().flatten());
                params.extend(model.b1.iter_mut());
                let [a, b] = &mut model.w2;
                params.extend(a.iter_mut());
                params.extend(b.iter_mut());
                params.extend(model.b2.iter_mut());
                adam.step(&mut params, &grads, cfg.learning_rate);
            }
        }
        Ok(model)
    }

    fn forward(&self, x: &[f32]) -> (Vec<f64>, [f64; 2]) {
        let hidden: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(w, b)| (w.iter().zip(x).map(|(a, v)| a * *v as f64).sum::<f64>() + b).max(0.0))
            .collect();
        let logit = |k: usize| self.w2[k].iter().zip(&hidden).map(|(a, h)| a * h).sum::<f64>() + self.b2[k];
        let (l0, l1) = (logit(0), logit(1));
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        (hidden, [e0 / (e0 + e1), e1 / (e0 + e1)])
    }

    /// Mean cross-entropy gradient over a batch, flattened in parameter order.
    fn gradients(&self, batch: &[(&Vec<f32>, usize)]) -> Vec<f64> {
        let h = self.b1.len();
        let dim = self.w1[0].len();
        let mut gw1 = vec![0.0; h * dim];
        let mut gb1 = vec![0.0; h];
        let mut gw2 = vec![0.0; 2 * h];
        let mut gb2 = [0.0; 2];
        let scale = 1.0 / batch.len() as f64;
        for (x, y) in batch {
            let (hidden, probs) = self.forward(x);
            let dl = [probs[0] - (*y == 0) as u8 as f64, probs[1] - (*y == 1) as u8 as f64];
            for k in 0..2 {
                gb2[k] += dl[k] * scale;
                for j in 0..h {
                    gw2[k * h + j] += dl[k] * hidden[j] * scale;
                }
            }
            for j in 0..h {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let dh = (dl[0] * self.w2[0][j] + dl[1] * self.w2[1][j]) * scale;
                gb1[j] += dh;
                for (i, v) in x.iter().enumerate() {
                    gw1[j * dim + i] += dh * *v as f64;
                }
            }
        }
        let mut out = gw1;
        out.extend(gb1);
        out.extend(gw2);
        out.extend(gb2);
        out
    }

    /// Probability of each of the category's two values.
    pub fn probabilities(&self, x: &[f32]) -> [(GroupValue, f64); 2] {
        let [v0, v1] = self.category.pair();
        let (_, p) = self.forward(x);
        [(v0, p[0]), (v1, p[1])]
    }

    pub fn predict(&self, x: &[f32]) -> (GroupValue, f64) {
        let [a, b] = self.probabilities(x);
        if b.1 > a.1 {
            b
        } else {
            a
        }
    }

    pub fn probability_of(&self, x: &[f32], value: GroupValue) -> f64 {
        self.probabilities(x).iter().find(|(v, _)| *v == value).map_or(0.0, |(_, p)| *p)
    }
}

/// Indices of items whose predicted label equals the true label with
/// probability at least `confidence`.
pub fn subset_group_specific(items: &[(Vec<f32>, GroupValue)], classifier: &GroupClassifier, confidence: f64) -> Vec<usize> {
    items
        .iter()
        .enumerate()
        .filter(|(_, (x, truth))| {
            let (pred, p) = classifier.predict(x);
            pred == *truth && p >= confidence
        })
        .map(|(i, _)| i)
        .collect()
}
