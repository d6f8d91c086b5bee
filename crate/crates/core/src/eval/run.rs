//! Evaluating several models over named test subsets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    bert_distance, bleu1, diversity, mark_divisive, pair_similarity, perplexity, question_type,
    redundancy, type_token_bigram, QuestionPair,
};
use crate::error::{Error, Result};
use crate::generation::{QuestionGenerator, SequenceScorer};
use crate::groups::GroupLabel;
use crate::ports::{DependencyParser, SentenceEncoder};
use crate::stats::mean;

pub const GROUP_SPECIFIC_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalExample {
    pub post_id: String,
    pub post_text: String,
    pub question: String,
    pub group: GroupLabel,
    /// Classifier probability that the question belongs to `group`.
    #[serde(default)]
    pub group_prob: Option<f64>,
}

pub struct ModelUnderTest<'a> {
    pub name: String,
    pub generator: &'a dyn QuestionGenerator,
    pub scorer: Option<&'a dyn SequenceScorer>,
    /// Whether generation is conditioned on the asker's group.
    pub conditioned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    Full,
    Divisive(u32),
    GroupSpecific,
    /// Expands into one subset per question type of the reference questions.
    ByQuestionType,
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "full" => Ok(Subset::Full),
            "group_specific" | "group-specific" => Ok(Subset::GroupSpecific),
            "by_question_type" | "by-question-type" | "qtype" => Ok(Subset::ByQuestionType),
            _ => s
                .strip_prefix("divisive@")
                .and_then(|n| n.parse().ok())
                .filter(|n| (1..=100).contains(n))
                .map(Subset::Divisive)
                .ok_or_else(|| Error::InvalidInput(format!("unknown subset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub subset: String,
    pub n: usize,
    pub bleu1: Option<f64>,
    pub bert_distance: Option<f64>,
    pub diversity: Option<f64>,
    pub type_token: Option<f64>,
    pub redundancy: Option<f64>,
    pub perplexity: Option<f64>,
}

impl MetricsRow {
    fn empty(model: &str, subset: &str) -> Self {
        MetricsRow {
            model: model.into(),
            subset: subset.into(),
            n: 0,
            bleu1: None,
            bert_distance: None,
            diversity: None,
            type_token: None,
            redundancy: None,
            perplexity: None,
        }
    }
}

/// Cross-group question pairs on the same post.
pub fn build_pairs(examples: &[EvalExample], encoder: &dyn SentenceEncoder) -> Result<Vec<(usize, usize, QuestionPair)>> {
    let mut out = Vec::new();
    for i in 0..examples.len() {
        for j in i + 1..examples.len() {
            let (a, b) = (&examples[i], &examples[j]);
            if a.post_id != b.post_id || a.group.is_unk() || b.group.is_unk() || a.group == b.group {
                continue;
            }
            let similarity = pair_similarity(&a.question, &b.question, encoder)?;
            out.push((
                i,
                j,
                QuestionPair {
                    post_id: a.post_id.clone(),
                    q1: a.question.clone(),
                    q2: b.question.clone(),
                    group1: a.group,
                    group2: b.group,
                    similarity,
                    divisive: false,
                },
            ));
        }
    }
    Ok(out)
}

/// Indices of examples that take part in a divisive pair at `n`.
pub fn divisive_indices(examples: &[EvalExample], n: u32, encoder: &dyn SentenceEncoder) -> Result<BTreeSet<usize>> {
    let pairs = build_pairs(examples, encoder)?;
    let (idx, mut qp): (Vec<(usize, usize)>, Vec<QuestionPair>) =
        pairs.into_iter().map(|(i, j, p)| ((i, j), p)).unzip();
    mark_divisive(&mut qp, n as f64)?;
    let mut keep = BTreeSet::new();
    for ((i, j), p) in idx.into_iter().zip(qp) {
        if p.divisive {
            keep.insert(i);
            keep.insert(j);
        }
    }
    Ok(keep)
}

/// Generates once per (model, example) and reports metrics per subset.
/// Rows come out ordered by model then subset.
pub fn evaluate_run(
    models: &[ModelUnderTest],
    examples: &[EvalExample],
    subsets: &[Subset],
    training_questions: &HashSet<String>,
    encoder: &dyn SentenceEncoder,
    parser: &dyn DependencyParser,
) -> Result<Vec<MetricsRow>> {
    let mut named: Vec<(String, Vec<usize>)> = Vec::new();
    let all: Vec<usize> = (0..examples.len()).collect();
    for s in subsets {
        match s {
            Subset::Full => named.push(("full".into(), all.clone())),
            Subset::Divisive(n) => {
                let idx = divisive_indices(examples, *n, encoder)?;
                named.push((format!("divisive@{n}"), idx.into_iter().collect()));
            }
            Subset::GroupSpecific => {
                let idx = all
                    .iter()
                    .copied()
                    .filter(|&i| examples[i].group_prob.is_some_and(|p| p >= GROUP_SPECIFIC_CONFIDENCE))
                    .collect();
                named.push(("group_specific".into(), idx));
            }
            Subset::ByQuestionType => {
                let mut by: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                for &i in &all {
                    by.entry(question_type(&examples[i].question, parser)).or_default().push(i);
                }
                named.extend(by.into_iter().map(|(t, v)| (format!("qtype:{t}"), v)));
            }
        }
    }

    let mut rows = Vec::new();
    for m in models {
        let mut generated = Vec::with_capacity(examples.len());
        for ex in examples {
            let group = m.conditioned.then_some(&ex.group);
            let q = m.generator.generate(&ex.post_text, group).unwrap_or_else(|e| {
                log::warn!("{}: generation failed on {}: {e}", m.name, ex.post_id);
                String::new()
            });
            generated.push(q);
        }
        for (subset, idx) in &named {
            if idx.is_empty() {
                rows.push(MetricsRow::empty(&m.name, subset));
                continue;
            }
            let hyps: Vec<&str> = idx.iter().map(|&i| generated[i].as_str()).collect();
            let bleus: Vec<f64> = idx.iter().map(|&i| bleu1(&generated[i], &examples[i].question)).collect();
            let mut dists = Vec::with_capacity(idx.len());
            for &i in idx {
                dists.push(bert_distance(&generated[i], &examples[i].question, encoder)?);
            }
            let ppl = match m.scorer {
                Some(s) => Some(perplexity(
                    s,
                    idx.iter().map(|&i| {
                        let ex = &examples[i];
                        (ex.post_text.as_str(), ex.question.as_str(), m.conditioned.then_some(&ex.group))
                    }),
                )?),
                None => None,
            };
            rows.push(MetricsRow {
                model: m.name.clone(),
                subset: subset.clone(),
                n: idx.len(),
                bleu1: mean(&bleus),
                bert_distance: mean(&dists),
                diversity: Some(diversity(&hyps)?),
                type_token: Some(type_token_bigram(&hyps)),
                redundancy: Some(redundancy(&hyps, training_questions)?),
                perplexity: ppl,
            });
        }
    }
    Ok(rows)
}

/// Delimited table, one line per row; empty subsets print `n=0` in the
/// metric columns.
pub fn write_csv<W: std::io::Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "subset", "n", "bleu1", "bert_distance", "diversity", "type_token", "redundancy", "perplexity"])?;
    let fmt = |v: Option<f64>, n: usize| match (v, n) {
        (_, 0) => "n=0".to_string(),
        (Some(x), _) => format!("{x:.4}"),
        (None, _) => String::new(),
    };
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.subset.clone(),
            r.n.to_string(),
            fmt(r.bleu1, r.n),
            fmt(r.bert_distance, r.n),
            fmt(r.diversity, r.n),
            fmt(r.type_token, r.n),
            fmt(r.redundancy, r.n),
            fmt(r.perplexity, r.n),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{FixedGenerator, UniformScorer};
    use crate::groups::{GroupCategory, GroupValue};
    use crate::ports::{HashEncoder, HeuristicParser};

    fn ex(post: &str, q: &str, v: GroupValue, prob: Option<f64>) -> EvalExample {
        EvalExample {
            post_id: post.into(),
            post_text: format!("text of {post}"),
            question: q.into(),
            group: GroupLabel::new(GroupCategory::Expertise, v).unwrap(),
            group_prob: prob,
        }
    }

    #[test]
    fn subsets_parse() {
        assert_eq!("divisive@10".parse::<Subset>().unwrap(), Subset::Divisive(10));
        assert_eq!("group-specific".parse::<Subset>().unwrap(), Subset::GroupSpecific);
        assert!("divisive@0".parse::<Subset>().is_err());
        assert!("nope".parse::<Subset>().is_err());
    }

    #[test]
    fn rows_per_model_and_subset() {
        let examples = vec![
            ex("p1", "what rate applies ?", GroupValue::Expert, Some(0.99)),
            ex("p1", "have you asked family ?", GroupValue::Novice, Some(0.5)),
            ex("p2", "what rate applies ?", GroupValue::Expert, None),
            ex("p2", "what rate applies here ?", GroupValue::Novice, Some(0.95)),
        ];
        let expert = GroupLabel::new(GroupCategory::Expertise, GroupValue::Expert).unwrap();
        let novice = GroupLabel::new(GroupCategory::Expertise, GroupValue::Novice).unwrap();
        let social = FixedGenerator {
            default: "why ?".into(),
            by_group: vec![(expert, "what rate applies ?".into()), (novice, "have you asked family ?".into())],
        };
        let plain = FixedGenerator { default: "what rate applies ?".into(), by_group: vec![] };
        let scorer = UniformScorer { vocab_size: 50 };
        let models = [
            ModelUnderTest { name: "text_only".into(), generator: &plain, scorer: Some(&scorer), conditioned: false },
            ModelUnderTest { name: "social_token".into(), generator: &social, scorer: None, conditioned: true },
        ];
        let subsets = [Subset::Full, Subset::Divisive(50), Subset::GroupSpecific, Subset::ByQuestionType];
        let enc = HashEncoder::default();
        let rows = evaluate_run(&models, &examples, &subsets, &HashSet::new(), &enc, &HeuristicParser).unwrap();
        let get = |m: &str, s: &str| rows.iter().find(|r| r.model == m && r.subset == s).unwrap();

        assert_eq!(get("social_token", "full").bleu1, Some(0.75));
        assert!((get("text_only", "full").perplexity.unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(get("text_only", "full").diversity, Some(0.25));
        // the p1 pair shares no words, so it is the lower-similarity pair
        assert_eq!(get("text_only", "divisive@50").n, 2);
        assert_eq!(get("social_token", "divisive@50").bleu1, Some(1.0));
        assert_eq!(get("text_only", "group_specific").n, 2);
        assert!(rows.iter().any(|r| r.subset == "qtype:what"));

        let again = evaluate_run(&models, &examples, &subsets, &HashSet::new(), &enc, &HeuristicParser).unwrap();
        assert_eq!(rows, again);

        let empty = evaluate_run(&models, &[], &[Subset::Full], &HashSet::new(), &enc, &HeuristicParser).unwrap();
        assert_eq!(empty[0].n, 0);
        let mut buf = Vec::new();
        write_csv(&empty, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("n=0"));
    }
}
