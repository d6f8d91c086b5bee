//! Bag-of-words random-forest classifier for information-seeking questions.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RandomForest};
use crate::error::{Error, Result};
use crate::text::words;

/// Vocabulary cap: the most frequent non-stopword types in the training rows.
pub const MAX_VOCAB: usize = 50;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(StopWords::parse(&text))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }
}

impl Default for StopWords {
    fn default() -> Self {
        StopWords::parse(DEFAULT_STOPWORDS)
    }
}

/// An annotated question with one binary label per annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedQuestion {
    pub id: String,
    pub post_id: String,
    pub asker_id: String,
    pub text: String,
    /// annotator -> relevant label
    pub relevant: Vec<(String, u8)>,
    /// annotator -> information-seeking label
    pub infoseek: Vec<(String, u8)>,
}

impl AnnotatedQuestion {
    /// Label when every annotator agrees on information-seeking.
    pub fn unanimous_infoseek(&self) -> Option<bool> {
        let first = self.infoseek.first()?.1;
        self.infoseek
            .iter()
            .all(|(_, v)| *v == first)
            .then_some(first == 1)
    }
}

/// Reads annotation rows from a delimited file with header
/// `id,post_id,asker_id,text,relevant_<annotator>...,infoseek_<annotator>...`.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedQuestion>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("annotation file lacks column '{name}'")))
    };
    let (id, post, asker, text) = (col("id")?, col("post_id")?, col("asker_id")?, col("text")?);
    let label_cols = |prefix: &str| -> Vec<(usize, String)> {
        headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|a| (i, a.to_string())))
            .collect()
    };
    let rel_cols = label_cols("relevant_");
    let info_cols = label_cols("infoseek_");
    if info_cols.is_empty() {
        return Err(Error::Parse("no infoseek_<annotator> columns".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let labels = |cols: &[(usize, String)]| -> Result<Vec<(String, u8)>> {
            cols.iter()
                .filter(|(i, _)| !rec.get(*i).unwrap_or("").trim().is_empty())
                .map(|(i, a)| match rec[*i].trim() {
                    "0" => Ok((a.clone(), 0)),
                    "1" => Ok((a.clone(), 1)),
                    other => Err(Error::Parse(format!("label must be 0/1, got '{other}'"))),
                })
                .collect()
        };
        out.push(AnnotatedQuestion {
            id: rec[id].to_string(),
            post_id: rec[post].to_string(),
            asker_id: rec[asker].to_string(),
            text: rec[text].to_string(),
            relevant: labels(&rel_cols)?,
            infoseek: labels(&info_cols)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoSeekClassifier {
    vocab: Vec<String>,
    forest: RandomForest,
}

fn build_vocab<'a>(texts: impl Iterator<Item = &'a str>, stop: &StopWords) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for w in words(t) {
            if !stop.contains(&w) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(MAX_VOCAB);
    ranked.into_iter().map(|(w, _)| w).collect()
}

impl InfoSeekClassifier {
    /// Trains on (text, label) pairs.
    pub fn fit(rows: &[(&str, bool)], stop: &StopWords, cfg: &ForestConfig) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("annotation rows"));
        }
        let vocab = build_vocab(rows.iter().map(|(t, _)| *t), stop);
        let x: Vec<Vec<f64>> = rows.iter().map(|(t, _)| featurize(&vocab, t)).collect();
        let y: Vec<bool> = rows.iter().map(|(_, l)| *l).collect();
        let forest = RandomForest::fit(&x, &y, cfg)?;
        Ok(InfoSeekClassifier { vocab, forest })
    }

    /// Trains on the rows whose information-seeking labels are unanimous.
    pub fn train(rows: &[AnnotatedQuestion], stop: &StopWords, cfg: &ForestConfig) -> Result<Self> {
        let data = unanimous_rows(rows);
        InfoSeekClassifier::fit(&data, stop, cfg)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn probability(&self, text: &str) -> f64 {
        self.forest.predict_proba(&featurize(&self.vocab, text))
    }
}

fn featurize(vocab: &[String], text: &str) -> Vec<f64> {
    let toks = words(text);
    vocab
        .iter()
        .map(|v| toks.iter().filter(|t| *t == v).count() as f64)
        .collect()
}

fn unanimous_rows(rows: &[AnnotatedQuestion]) -> Vec<(&str, bool)> {
    rows.iter()
        .filter_map(|r| r.unanimous_infoseek().map(|l| (r.text.as_str(), l)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

fn f1(pred: &[bool], gold: &[bool]) -> f64 {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p && !**g).count() as f64;
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| !**p && **g).count() as f64;
    if tp + fp + fn_ == 0.0 {
        // No positives predicted or present: nothing was missed.
        return 1.0;
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// k-fold cross-validation (positive-class F1 per fold). Rows are shuffled
/// with `seed`; each fold builds its own vocabulary from its training part.
pub fn cross_validate(
    rows: &[AnnotatedQuestion],
    folds: usize,
    stop: &StopWords,
    cfg: &ForestConfig,
    seed: u64,
) -> Result<CvReport> {
    let data = unanimous_rows(rows);
    if folds < 2 || data.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} usable rows cannot be split into {folds} folds",
            data.len()
        )));
    }
    let n_pos = data.iter().filter(|(_, l)| *l).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(Error::SingleClass("annotations".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_f1 = Vec::with_capacity(folds);
    for k in 0..folds {
        let (test, train): (Vec<(usize, &usize)>, Vec<(usize, &usize)>) =
            order.iter().enumerate().partition(|(i, _)| i % folds == k);
        let test: Vec<usize> = test.into_iter().map(|(_, j)| *j).collect();
        let train: Vec<(&str, bool)> = train.into_iter().map(|(_, j)| data[*j]).collect();
        let clf = InfoSeekClassifier::fit(&train, stop, cfg)?;
        let pred: Vec<bool> = test.iter().map(|&j| clf.probability(data[j].0) >= 0.5).collect();
        let gold: Vec<bool> = test.iter().map(|&j| data[j].1).collect();
        fold_f1.push(f1(&pred, &gold));
    }
    let mean_f1 = fold_f1.iter().sum::<f64>() / folds as f64;
    Ok(CvReport { fold_f1, mean_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> Vec<AnnotatedQuestion> {
        let filler = [
            "car", "loan", "rent", "job", "boss", "bank", "house", "tax", "school", "doctor",
            "money", "insurance", "lawyer", "landlord", "friend",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let mut toks: Vec<&str> = (0..4).map(|_| filler[rng.gen_range(0..filler.len())]).collect();
                if positive {
                    toks.insert(rng.gen_range(0..=toks.len()), "how");
                }
                let label = positive as u8;
                AnnotatedQuestion {
                    id: i.to_string(),
                    post_id: "p".into(),
                    asker_id: "a".into(),
                    text: format!("{}?", toks.join(" ")),
                    relevant: vec![("a1".into(), 1)],
                    infoseek: vec![("a1".into(), label), ("a2".into(), label)],
                }
            })
            .collect()
    }

    #[test]
    fn separable_set_scores_perfectly() {
        let rows = separable(200, 3);
        let report = cross_validate(&rows, 10, &StopWords::default(), &ForestConfig::default(), 7).unwrap();
        assert_eq!(report.fold_f1.len(), 10);
        assert!(report.fold_f1.iter().all(|f| *f == 1.0), "{report:?}");
    }

    #[test]
    fn single_class_errors() {
        let mut rows = separable(20, 1);
        for r in &mut rows {
            r.infoseek = vec![("a1".into(), 1)];
        }
        let err = InfoSeekClassifier::train(&rows, &StopWords::default(), &ForestConfig::default());
        assert!(matches!(err, Err(Error::SingleClass(_))));
    }

    #[test]
    fn disagreements_are_dropped() {
        let mut rows = separable(10, 1);
        rows[0].infoseek = vec![("a1".into(), 1), ("a2".into(), 0)];
        assert_eq!(unanimous_rows(&rows).len(), 9);
    }

    #[test]
    fn vocabulary_is_capped_and_stopword_free() {
        let texts: Vec<String> = (0..120).map(|i| format!("the word{i} and w{} ?", i % 7)).collect();
        let rows: Vec<(&str, bool)> = texts.iter().enumerate().map(|(i, t)| (t.as_str(), i % 3 == 0)).collect();
        let clf = InfoSeekClassifier::fit(&rows, &StopWords::default(), &ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
        assert!(clf.vocab().len() <= MAX_VOCAB);
        assert!(!clf.vocab().iter().any(|w| w == "the" || w == "and"));
        assert_eq!(clf.vocab()[0], "w0");
    }

    #[test]
    fn loads_annotation_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        std::fs::write(
            &path,
            "id,post_id,asker_id,text,relevant_a,relevant_b,infoseek_a,infoseek_b\n\
             q1,p1,u1,how much?,1,1,1,1\n\
             q2,p1,u2,really?,1,0,0,1\n",
        )
        .unwrap();
        let rows = load_annotations(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].unanimous_infoseek(), Some(true));
        assert_eq!(rows[1].unanimous_infoseek(), None);
    }
}
