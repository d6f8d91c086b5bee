//! Binary random forest (bootstrap-sampled CART trees, Gini impurity).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features considered per split; `None` means sqrt of the feature count.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        positive: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf { positive } => *positive,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    n_features: usize,
    trees: Vec<Node>,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    max_features: usize,
    max_depth: usize,
    min_samples_split: usize,
}

impl Builder<'_> {
    fn build(&self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let n = idx.len();
        let leaf = Node::Leaf {
            positive: pos as f64 / n as f64,
        };
        if pos == 0 || pos == n || n < self.min_samples_split || depth >= self.max_depth {
            return leaf;
        }
        let n_features = self.x[0].len();
        let mut features: Vec<usize> = (0..n_features).collect();
        features.shuffle(rng);

        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<(f64, bool)> = Vec::with_capacity(n);
        for &f in features.iter().take(self.max_features) {
            values.clear();
            values.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                if values[k - 1].1 {
                    left_pos += 1;
                }
                if values[k].0 == values[k - 1].0 {
                    continue;
                }
                let right_pos = pos - left_pos;
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(right_pos, n - k))
                    / n as f64;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, (values[k - 1].0 + values[k].0) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        let mid = partition(idx, |i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(l, depth + 1, rng)),
            right: Box::new(self.build(r, depth + 1, rng)),
        }
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if pred(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[bool], cfg: &ForestConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput("forest needs equally many rows and labels".into()));
        }
        let n_pos = y.iter().filter(|v| **v).count();
        if n_pos == 0 || n_pos == y.len() {
            return Err(Error::SingleClass(if n_pos == 0 { "0".into() } else { "1".into() }));
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features) {
            return Err(Error::InvalidInput("ragged feature rows".into()));
        }
        let max_features = cfg
            .max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1));
        let builder = Builder {
            x,
            y,
            max_features,
            max_depth: cfg.max_depth.unwrap_or(usize::MAX),
            min_samples_split: cfg.min_samples_split.max(2),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let trees = (0..cfg.n_trees.max(1))
            .map(|_| {
                let mut sample: Vec<usize> =
                    (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                if n_features == 0 {
                    let pos = sample.iter().filter(|&&i| y[i]).count();
                    return Node::Leaf {
                        positive: pos as f64 / sample.len() as f64,
                    };
                }
                builder.build(&mut sample, 0, &mut rng)
            })
            .collect();
        Ok(RandomForest { n_features, trees })
    }

    /// Mean leaf positive-class fraction across trees.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features);
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_single_informative_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let mut r: Vec<f64> = (0..9).map(|_| rng.gen_range(0..3) as f64).collect();
                r.push((i % 2) as f64);
                r
            })
            .collect();
        let y: Vec<bool> = (0..200).map(|i| i % 2 == 1).collect();
        let f = RandomForest::fit(&x, &y, &ForestConfig::default()).unwrap();
        let mut probe = vec![1.0; 10];
        probe[9] = 1.0;
        assert!(f.predict_proba(&probe) > 0.5);
        probe[9] = 0.0;
        assert!(f.predict_proba(&probe) < 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            RandomForest::fit(&x, &[true, true], &ForestConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }
}
