//! Question-generation metrics, divisive-pair identification and analysis
//! helpers. Everything here is a pure function of its inputs.

mod run;

pub use run::{
    build_pairs, divisive_indices, evaluate_run, write_csv, EvalExample, MetricsRow, ModelUnderTest, Subset,
    GROUP_SPECIFIC_CONFIDENCE,
};

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::generation::SequenceScorer;
use crate::groups::GroupLabel;
use crate::ports::{DependencyParser, SentenceEncoder, HashEncoder, WH_WORDS, AUX_WORDS};
use crate::stats::{cosine, nearest_rank_percentile};
use crate::text::{normalize_question, sentences, words};

/// Clipped unigram precision with the standard brevity penalty.
pub fn bleu1(hypothesis: &str, reference: &str) -> f64 {
    let hyp = words(hypothesis);
    let reference = words(reference);
    if hyp.is_empty() {
        return 0.0;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for w in &reference {
        *ref_counts.entry(w).or_default() += 1;
    }
    let mut matched = 0usize;
    for w in &hyp {
        if let Some(c) = ref_counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    let precision = matched as f64 / hyp.len() as f64;
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).min(0.0).exp();
    precision * bp
}

/// `1 - cos` between sentence embeddings.
pub fn bert_distance(hypothesis: &str, reference: &str, encoder: &dyn SentenceEncoder) -> Result<f64> {
    let a = encoder.encode(hypothesis)?;
    let b = encoder.encode(reference)?;
    Ok(1.0 - cosine(&a, &b))
}

/// exp of the mean per-token negative log-likelihood over every target token.
pub fn perplexity<'a, I>(scorer: &dyn SequenceScorer, items: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a str, &'a str, Option<&'a GroupLabel>)>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (source, target, group) in items {
        for nll in scorer.token_nlls(source, target, group)? {
            total += nll;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("perplexity targets"));
    }
    Ok((total / count as f64).exp())
}

/// Distinct bigrams over total bigrams, pooled across the whole set.
pub fn type_token_bigram<S: AsRef<str>>(hypotheses: &[S]) -> f64 {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut total = 0usize;
    for h in hypotheses {
        let toks = words(h.as_ref());
        for w in toks.windows(2) {
            total += 1;
            seen.insert((w[0].clone(), w[1].clone()));
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

pub fn diversity<S: AsRef<str>>(hypotheses: &[S]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Empty("hypotheses"));
    }
    let distinct: HashSet<String> = hypotheses.iter().map(|h| normalize_question(h.as_ref())).collect();
    Ok(distinct.len() as f64 / hypotheses.len() as f64)
}

/// Normalized training-question set for [`redundancy`].
pub fn training_set<S: AsRef<str>>(questions: &[S]) -> HashSet<String> {
    questions.iter().map(|q| normalize_question(q.as_ref())).collect()
}

pub fn redundancy<S: AsRef<str>>(hypotheses: &[S], training: &HashSet<String>) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Empty("hypotheses"));
    }
    let hits = hypotheses
        .iter()
        .filter(|h| training.contains(&normalize_question(h.as_ref())))
        .count();
    Ok(hits as f64 / hypotheses.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPair {
    pub post_id: String,
    pub q1: String,
    pub q2: String,
    pub group1: GroupLabel,
    pub group2: GroupLabel,
    pub similarity: f64,
    pub divisive: bool,
}

pub fn pair_similarity(q1: &str, q2: &str, encoder: &dyn SentenceEncoder) -> Result<f64> {
    Ok(cosine(&encoder.encode(q1)?, &encoder.encode(q2)?))
}

/// Marks pairs whose similarity is at or below the nearest-rank `n`-th
/// percentile of all pair similarities. Returns the threshold, or `None`
/// (and clears every label) when fewer than two pairs are given.
pub fn mark_divisive(pairs: &mut [QuestionPair], n_percentile: f64) -> Result<Option<f64>> {
    if pairs.len() < 2 {
        pairs.iter_mut().for_each(|p| p.divisive = false);
        return Ok(None);
    }
    let sims: Vec<f64> = pairs.iter().map(|p| p.similarity).collect();
    let threshold = nearest_rank_percentile(&sims, n_percentile)?;
    for p in pairs.iter_mut() {
        p.divisive = p.similarity <= threshold;
    }
    Ok(Some(threshold))
}

/// Word-vector lookup for [`word_embedding_similarity`].
pub trait WordVectors {
    fn vector(&self, word: &str) -> Option<Vec<f32>>;
}

impl WordVectors for HashMap<String, Vec<f32>> {
    fn vector(&self, word: &str) -> Option<Vec<f32>> {
        self.get(word).cloned()
    }
}

impl WordVectors for HashEncoder {
    fn vector(&self, word: &str) -> Option<Vec<f32>> {
        Some(self.word_vector(word))
    }
}

fn mean_word_vector(text: &str, vectors: &dyn WordVectors) -> Option<Vec<f32>> {
    let found: Vec<Vec<f32>> = words(text).iter().filter_map(|w| vectors.vector(w)).collect();
    let first = found.first()?;
    let mut acc = vec![0f32; first.len()];
    for v in &found {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    let n = found.len() as f32;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

/// Cosine of mean word vectors; `None` when either side has no known words.
pub fn word_embedding_similarity(q1: &str, q2: &str, vectors: &dyn WordVectors) -> Option<f64> {
    let a = mean_word_vector(q1, vectors)?;
    let b = mean_word_vector(q2, vectors)?;
    Some(cosine(&a, &b))
}

/// Question word attached to the root verb. Falls back to an auxiliary
/// attached to the root (do/does/did collapse to "do") and then to "other".
pub fn question_type(question: &str, parser: &dyn DependencyParser) -> String {
    let parsed = match parser.parse(question) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("parse failed for {question:?}: {e}");
            return "other".into();
        }
    };
    let Some(root) = parsed.iter().position(|t| t.head == 0) else {
        return "other".into();
    };
    let attached = |t: &&crate::ports::DepToken| t.head == root + 1;
    if let Some(t) = parsed.iter().filter(attached).find(|t| WH_WORDS.contains(&t.form.as_str())) {
        return t.form.clone();
    }
    if WH_WORDS.contains(&parsed[root].form.as_str()) {
        return parsed[root].form.clone();
    }
    let aux = parsed
        .iter()
        .filter(attached)
        .find(|t| t.deprel == "aux" && AUX_WORDS.contains(&t.form.as_str()))
        .or_else(|| Some(&parsed[root]).filter(|t| AUX_WORDS.contains(&t.form.as_str())));
    match aux.map(|t| t.form.as_str()) {
        Some("do" | "does" | "did") => "do".into(),
        Some(a) => a.into(),
        None => "other".into(),
    }
}

/// Maximum cosine between the question and any post sentence; `None` for an
/// empty post.
pub fn post_similarity(question: &str, post: &str, encoder: &dyn SentenceEncoder) -> Result<Option<f64>> {
    let q = encoder.encode(question)?;
    let mut best: Option<f64> = None;
    for s in sentences(post) {
        let c = cosine(&q, &encoder.encode(s)?);
        best = Some(best.map_or(c, |b: f64| b.max(c)));
    }
    Ok(best)
}
