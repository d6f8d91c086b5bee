//! Candidate question extraction and information-seeking filtering.

mod forest;
mod infoseek;

pub use forest::{ForestConfig, RandomForest};
pub use infoseek::{
    cross_validate, load_annotations, AnnotatedQuestion, CvReport, InfoSeekClassifier,
    StopWords, MAX_VOCAB,
};

use serde::{Deserialize, Serialize};

use crate::ingest::Comment;
use crate::text::sentences;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub post_id: String,
    pub asker_id: String,
    pub text: String,
    pub created_utc: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infoseek_prob: Option<f64>,
}

/// Every sentence of the comment that ends in `?`, in order. Question ids are
/// `<comment id>#<index>`.
pub fn extract_candidates(comment: &Comment) -> Vec<Question> {
    sentences(&comment.body)
        .into_iter()
        .filter(|s| s.ends_with('?'))
        .enumerate()
        .map(|(i, s)| Question {
            id: format!("{}#{i}", comment.id),
            post_id: comment.post_id.clone(),
            asker_id: comment.author.clone(),
            text: s.to_string(),
            created_utc: comment.created_utc,
            infoseek_prob: None,
        })
        .collect()
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Keeps questions whose information-seeking probability is at least
/// `threshold` (inclusive). Every returned question carries its probability.
pub fn score_and_filter<F>(questions: Vec<Question>, score: F, threshold: f64) -> Vec<Question>
where
    F: Fn(&str) -> f64,
{
    questions
        .into_iter()
        .filter_map(|mut q| {
            let p = score(&q.text);
            q.infoseek_prob = Some(p);
            (p >= threshold).then_some(q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comment(body: &str) -> Comment {
        Comment {
            id: "c1".into(),
            post_id: "p1".into(),
            author: "asker".into(),
            body: body.into(),
            created_utc: 100,
        }
    }

    #[test]
    fn extract_examples() {
        let qs = extract_candidates(&comment("Where do you live? I moved twice."));
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].text, "Where do you live?");
        assert_eq!(qs[0].asker_id, "asker");

        let texts: Vec<_> = extract_candidates(&comment("Really?? Why?"))
            .into_iter()
            .map(|q| q.text)
            .collect();
        assert_eq!(texts, ["Really??", "Why?"]);

        assert!(extract_candidates(&comment("No questions here.")).is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let probs = [("a?", 0.2), ("b?", 0.5), ("c?", 0.7), ("d?", 0.9), ("e?", 0.49)];
        let qs: Vec<Question> = probs
            .iter()
            .map(|(t, _)| Question {
                id: t.to_string(),
                post_id: "p".into(),
                asker_id: "a".into(),
                text: t.to_string(),
                created_utc: 1,
                infoseek_prob: None,
            })
            .collect();
        let lookup = |t: &str| probs.iter().find(|(k, _)| *k == t).unwrap().1;
        let kept = score_and_filter(qs, lookup, DEFAULT_THRESHOLD);
        let ids: Vec<_> = kept.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["b?", "c?", "d?"]);
        assert!(kept.iter().all(|q| q.infoseek_prob.unwrap() >= 0.5));
    }

    proptest::proptest! {
        #[test]
        fn candidates_are_substrings(body in "[a-z?!. ]{0,60}") {
            let c = comment(&body);
            for q in extract_candidates(&c) {
                proptest::prop_assert!(body.contains(&q.text));
                proptest::prop_assert!(q.text.ends_with('?'));
            }
        }

        #[test]
        fn raising_threshold_never_adds(probs in proptest::collection::vec(0.0f64..1.0, 0..20), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let qs: Vec<Question> = probs.iter().enumerate().map(|(i, _)| Question {
                id: i.to_string(), post_id: "p".into(), asker_id: "a".into(),
                text: i.to_string(), created_utc: 1, infoseek_prob: None,
            }).collect();
            let score = |t: &str| probs[t.parse::<usize>().unwrap()];
            let low = score_and_filter(qs.clone(), score, lo);
            let high = score_and_filter(qs, score, hi);
            proptest::prop_assert!(high.len() <= low.len());
            for q in &high {
                proptest::prop_assert!(low.iter().any(|l| l.id == q.id));
            }
        }
    }
}
