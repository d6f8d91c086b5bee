//! Social group labeling of question-askers from their comment history.
//!
//! Labeling is two-phase: thresholds are computed once over a population of
//! profiles ([`ThresholdSet::compute`]) and then each profile is labeled
//! independently against the frozen thresholds.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::groups::{GroupCategory, GroupLabel, GroupValue};
use crate::ports::{EntityRecognizer, Geocoder};
use crate::stats::{cosine, nearest_rank_percentile};

pub const MAX_HISTORY: usize = 1000;
pub const EXPERTISE_PERCENTILE: f64 = 75.0;
pub const TIME_PERCENTILE: f64 = 50.0;
pub const DEFAULT_MIN_LOCATION_COMMENTS: usize = 5;
pub const DEFAULT_RELATED_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub subreddit: String,
    pub created_utc: i64,
    #[serde(default)]
    pub parent_created_utc: Option<i64>,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskerProfile {
    pub asker_id: String,
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub labels: BTreeMap<GroupCategory, GroupValue>,
    #[serde(default)]
    pub expertise_score: Option<f64>,
    #[serde(default)]
    pub mean_response_secs: Option<f64>,
}

impl AskerProfile {
    /// Keeps the most recent [`MAX_HISTORY`] entries, oldest first.
    pub fn new(asker_id: impl Into<String>, mut history: Vec<HistoryEntry>) -> Self {
        history.sort_by_key(|h| h.created_utc);
        if history.len() > MAX_HISTORY {
            history.drain(..history.len() - MAX_HISTORY);
        }
        AskerProfile {
            asker_id: asker_id.into(),
            history,
            labels: BTreeMap::new(),
            expertise_score: None,
            mean_response_secs: None,
        }
    }

    pub fn set_label(&mut self, label: GroupLabel) {
        self.labels.insert(label.category(), label.value());
    }

    pub fn label(&self, category: GroupCategory) -> GroupLabel {
        self.labels
            .get(&category)
            .and_then(|v| GroupLabel::new(category, *v).ok())
            .unwrap_or_else(|| GroupLabel::unk(category))
    }
}

/// Share of history entries written in the target subreddit or a related one.
pub fn expertise_score(profile: &AskerProfile, target: &str, related: &HashSet<String>) -> f64 {
    if profile.history.is_empty() {
        return 0.0;
    }
    let target = target.to_lowercase();
    let related: HashSet<String> = related.iter().map(|s| s.to_lowercase()).collect();
    let hits = profile
        .history
        .iter()
        .filter(|h| {
            let s = h.subreddit.to_lowercase();
            s == target || related.contains(&s)
        })
        .count();
    hits as f64 / profile.history.len() as f64
}

pub fn compute_percentile_threshold(scores: &[f64], p: f64) -> Result<f64> {
    nearest_rank_percentile(scores, p)
}

pub fn label_expertise(score: f64, threshold: f64) -> GroupLabel {
    let value = if score >= threshold {
        GroupValue::Expert
    } else {
        GroupValue::Novice
    };
    GroupLabel::new(GroupCategory::Expertise, value).expect("legal value")
}

/// Mean of `created_utc - parent_created_utc` over entries with a known,
/// not-later parent.
pub fn mean_response_secs(profile: &AskerProfile) -> Option<f64> {
    let deltas: Vec<f64> = profile
        .history
        .iter()
        .filter_map(|h| {
            let parent = h.parent_created_utc?;
            (parent <= h.created_utc).then(|| (h.created_utc - parent) as f64)
        })
        .collect();
    crate::stats::mean(&deltas)
}

pub fn label_time(profile: &AskerProfile, median_threshold: f64) -> GroupLabel {
    let value = match mean_response_secs(profile) {
        None => GroupValue::UNK,
        Some(m) if m >= median_threshold => GroupValue::Slow,
        Some(_) => GroupValue::Fast,
    };
    GroupLabel::new(GroupCategory::Time, value).expect("legal value")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub expertise_p75: f64,
    pub time_p50: f64,
    pub population_id: String,
}

impl ThresholdSet {
    /// Thresholds for one target subreddit's population. Askers without
    /// usable response times do not enter the time population; if none have
    /// any, the time threshold is infinite and nobody is `Slow`.
    pub fn compute(
        population_id: impl Into<String>,
        profiles: &[AskerProfile],
        target: &str,
        related: &HashSet<String>,
    ) -> Result<Self> {
        let scores: Vec<f64> = profiles
            .iter()
            .map(|p| expertise_score(p, target, related))
            .collect();
        let times: Vec<f64> = profiles.iter().filter_map(mean_response_secs).collect();
        Ok(ThresholdSet {
            expertise_p75: compute_percentile_threshold(&scores, EXPERTISE_PERCENTILE)?,
            time_p50: if times.is_empty() {
                f64::INFINITY
            } else {
                compute_percentile_threshold(&times, TIME_PERCENTILE)?
            },
            population_id: population_id.into(),
        })
    }
}

/// Phrases that mark a location mention as the author's own.
pub const RESIDENCE_CUES: &[&str] = &["i live in", "i'm from", "i am from", "im from", "my city"];
/// Maximum number of words between a cue and its entity.
const CUE_WINDOW_WORDS: usize = 3;

fn gap_ok(gap: &str) -> bool {
    !gap.contains(['.', '!', '?', '\n']) && gap.split_whitespace().count() <= CUE_WINDOW_WORDS
}

/// Location entities in `body` that sit right after a residence cue (or
/// right before "my city").
pub fn self_identified_locations(body: &str, ner: &dyn EntityRecognizer) -> Result<Vec<String>> {
    let lower = body.to_lowercase();
    // Lowercasing can change byte lengths for non-ASCII text; fall back to no cues then.
    if lower.len() != body.len() {
        return Ok(Vec::new());
    }
    let mut cues: Vec<(usize, usize, &str)> = Vec::new();
    for cue in RESIDENCE_CUES {
        for (start, _) in lower.match_indices(cue) {
            cues.push((start, start + cue.len(), cue));
        }
    }
    if cues.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for ent in ner.locations(body)? {
        let claimed = cues.iter().any(|&(cs, ce, cue)| {
            (ent.start >= ce && gap_ok(&body[ce..ent.start]))
                || (cue == "my city" && ent.end <= cs && gap_ok(&body[ent.end..cs]))
        });
        if claimed {
            out.push(ent.text);
        }
    }
    Ok(out)
}

fn is_us(country: &str) -> bool {
    matches!(
        country.trim().to_lowercase().as_str(),
        "united states" | "united states of america" | "usa" | "us" | "u.s." | "u.s.a."
    )
}

fn location_label(country: &str) -> GroupLabel {
    let value = if is_us(country) {
        GroupValue::US
    } else {
        GroupValue::NonUS
    };
    GroupLabel::new(GroupCategory::Location, value).expect("legal value")
}

/// Resolves an asker's location: self-identification first, then the
/// most-used location-specific subreddit, else `UNK`.
pub struct LocationResolver<'a> {
    pub ner: &'a dyn EntityRecognizer,
    pub geocoder: &'a dyn Geocoder,
    /// lowercase subreddit name -> place name
    pub subreddit_geo: &'a HashMap<String, String>,
    pub min_comments: usize,
}

impl LocationResolver<'_> {
    pub fn infer(&self, profile: &AskerProfile) -> GroupLabel {
        if let Some(label) = self.from_self_identification(profile) {
            return label;
        }
        self.from_subreddits(profile)
            .unwrap_or_else(|| GroupLabel::unk(GroupCategory::Location))
    }

    fn from_self_identification(&self, profile: &AskerProfile) -> Option<GroupLabel> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for h in &profile.history {
            match self_identified_locations(&h.body, self.ner) {
                Ok(ents) => ents.into_iter().for_each(|e| *counts.entry(e).or_default() += 1),
                Err(e) => log::warn!("entity recognizer failed for {}: {e}", profile.asker_id),
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        // Most frequent first; BTreeMap order already breaks ties by name.
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.into_iter().find_map(|(place, _)| match self.geocoder.country(&place) {
            Ok(Some(country)) => Some(location_label(&country)),
            Ok(None) => None,
            Err(e) => {
                log::warn!("geocoder failed on '{place}': {e}");
                None
            }
        })
    }

    fn from_subreddits(&self, profile: &AskerProfile) -> Option<GroupLabel> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for h in &profile.history {
            let s = h.subreddit.to_lowercase();
            if self.subreddit_geo.contains_key(&s) {
                *counts.entry(s).or_default() += 1;
            }
        }
        let (best, n) = counts
            .iter()
            .fold(None::<(&String, usize)>, |acc, (s, &n)| match acc {
                Some((_, m)) if m >= n => acc,
                _ => Some((s, n)),
            })?;
        if n < self.min_comments {
            return None;
        }
        let place = &self.subreddit_geo[best];
        match self.geocoder.country(place) {
            Ok(Some(country)) => Some(location_label(&country)),
            _ => None,
        }
    }
}

/// Labels one profile against frozen thresholds, filling its scores.
pub fn label_profile(
    profile: &mut AskerProfile,
    thresholds: &ThresholdSet,
    target: &str,
    related: &HashSet<String>,
    location: &LocationResolver<'_>,
) {
    let score = expertise_score(profile, target, related);
    profile.expertise_score = Some(score);
    profile.mean_response_secs = mean_response_secs(profile);
    let expertise = label_expertise(score, thresholds.expertise_p75);
    let time = label_time(profile, thresholds.time_p50);
    let loc = location.infer(profile);
    profile.set_label(expertise);
    profile.set_label(time);
    profile.set_label(loc);
}

/// The `k` nearest subreddits to `target` by cosine similarity, kept only if
/// the curated allowlist for `target` contains them.
pub fn related_subreddits(
    target: &str,
    embeddings: &HashMap<String, Vec<f32>>,
    k: usize,
    allowlist: &HashMap<String, HashSet<String>>,
) -> HashSet<String> {
    let target_lc = target.to_lowercase();
    let lookup: HashMap<String, &Vec<f32>> = embeddings
        .iter()
        .map(|(k, v)| (k.to_lowercase(), v))
        .collect();
    let Some(tv) = lookup.get(&target_lc) else {
        log::warn!("subreddit '{target}' has no embedding; no related subreddits");
        return HashSet::new();
    };
    let allowed: HashSet<String> = allowlist
        .iter()
        .find(|(t, _)| t.to_lowercase() == target_lc)
        .map(|(_, set)| set.iter().map(|s| s.to_lowercase()).collect())
        .unwrap_or_default();
    if allowed.is_empty() {
        return HashSet::new();
    }
    let mut ranked: Vec<(&String, f64)> = lookup
        .iter()
        .filter(|(name, _)| **name != target_lc)
        .map(|(name, v)| (name, cosine(tv, v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(k)
        .filter(|(name, _)| allowed.contains(*name))
        .map(|(name, _)| name.clone())
        .collect()
}

/// Reads `target<TAB>neighbor1 neighbor2 ...` lines.
pub fn load_allowlist(path: &std::path::Path) -> Result<HashMap<String, HashSet<String>>> {
    Ok(crate::ports::read_key_values(path)?
        .into_iter()
        .map(|(k, v)| {
            let set = v.split([' ', ',']).filter(|s| !s.is_empty()).map(str::to_string).collect();
            (k, set)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ports::{Gazetteer, GazetteerNer};

    fn entry(sub: &str) -> HistoryEntry {
        HistoryEntry {
            subreddit: sub.into(),
            created_utc: 100,
            parent_created_utc: None,
            body: String::new(),
        }
    }

    fn profile(subs: &[&str]) -> AskerProfile {
        AskerProfile::new("a", subs.iter().map(|s| entry(s)).collect())
    }

    #[test]
    fn expertise_examples() {
        let none = HashSet::new();
        assert_eq!(expertise_score(&profile(&["x"; 10]), "pf", &none), 0.0);
        assert_eq!(expertise_score(&profile(&["pf"; 10]), "pf", &none), 1.0);
        let mut subs = vec!["x"; 9];
        subs.extend(["pf", "PF", "investing"]);
        let related: HashSet<String> = ["investing".to_string()].into();
        assert_eq!(expertise_score(&profile(&subs), "PF", &related), 0.25);
        assert_eq!(expertise_score(&profile(&[]), "pf", &none), 0.0);
    }

    #[test]
    fn expert_at_threshold() {
        assert_eq!(label_expertise(0.3, 0.3).value(), GroupValue::Expert);
        assert_eq!(label_expertise(0.0, 0.1).value(), GroupValue::Novice);
        // Nearest-rank threshold of {0,0,0,0.8} is 0, so the tied zeros are Expert too.
        let pop = [0.0, 0.0, 0.0, 0.8];
        let t = compute_percentile_threshold(&pop, 75.0).unwrap();
        assert_eq!(t, 0.0);
        let experts = pop.iter().filter(|s| label_expertise(**s, t).value() == GroupValue::Expert).count();
        assert_eq!(experts, 4);
    }

    #[test]
    fn expert_population_with_distinct_scores() {
        let pop = [0.0, 0.1, 0.2, 0.8];
        let t = compute_percentile_threshold(&pop, 75.0).unwrap();
        let experts: Vec<f64> = pop.iter().copied().filter(|s| *s >= t).collect();
        assert_eq!(experts, [0.2, 0.8]);
    }

    #[test]
    fn time_labels() {
        let mut p = AskerProfile::new(
            "a",
            vec![
                HistoryEntry { subreddit: "x".into(), created_utc: 160, parent_created_utc: Some(100), body: String::new() },
                HistoryEntry { subreddit: "x".into(), created_utc: 320, parent_created_utc: Some(200), body: String::new() },
            ],
        );
        assert_eq!(mean_response_secs(&p), Some(90.0));
        assert_eq!(label_time(&p, 90.0).value(), GroupValue::Slow);
        assert_eq!(label_time(&p, 91.0).value(), GroupValue::Fast);
        p.history.iter_mut().for_each(|h| h.parent_created_utc = None);
        assert_eq!(label_time(&p, 1.0).value(), GroupValue::UNK);
    }

    #[test]
    fn history_is_bounded() {
        let hist = (0..1500).map(|i| HistoryEntry { created_utc: i, ..entry("x") }).collect();
        let p = AskerProfile::new("a", hist);
        assert_eq!(p.history.len(), MAX_HISTORY);
        assert_eq!(p.history[0].created_utc, 500);
    }

    fn fixture() -> (Gazetteer, HashMap<String, String>) {
        let g = Gazetteer::from_pairs([
            ("Toronto", "Canada"),
            ("New York City", "United States"),
            ("London", "United Kingdom"),
        ]);
        let geo = HashMap::from([("nyc".to_string(), "New York City".to_string()), ("london".to_string(), "London".to_string())]);
        (g, geo)
    }

    #[test]
    fn location_fixture_cases() {
        let (g, geo) = fixture();
        let ner = GazetteerNer::new(&g);
        let r = LocationResolver { ner: &ner, geocoder: &g, subreddit_geo: &geo, min_comments: 5 };

        let mut p = profile(&["advice"]);
        p.history[0].body = "I live in Toronto and love it".into();
        assert_eq!(r.infer(&p).value(), GroupValue::NonUS);

        assert_eq!(r.infer(&profile(&["NYC"; 6])).value(), GroupValue::US);
        assert_eq!(r.infer(&profile(&["nyc"; 4])).value(), GroupValue::UNK);
    }

    #[test]
    fn plain_mentions_do_not_count() {
        let (g, geo) = fixture();
        let ner = GazetteerNer::new(&g);
        let r = LocationResolver { ner: &ner, geocoder: &g, subreddit_geo: &geo, min_comments: 5 };
        let mut p = profile(&["advice"]);
        p.history[0].body = "Toronto is lovely in spring. I live in a flat.".into();
        assert_eq!(r.infer(&p).value(), GroupValue::UNK);
        p.history[0].body = "London is my city.".into();
        assert_eq!(r.infer(&p).value(), GroupValue::NonUS);
    }

    #[test]
    fn subreddit_tie_is_lexicographic() {
        let (g, geo) = fixture();
        let ner = GazetteerNer::new(&g);
        let r = LocationResolver { ner: &ner, geocoder: &g, subreddit_geo: &geo, min_comments: 5 };
        let mut subs = vec!["nyc"; 5];
        subs.extend(["london"; 5]);
        // "london" < "nyc"
        assert_eq!(r.infer(&profile(&subs)).value(), GroupValue::NonUS);
        subs.reverse();
        assert_eq!(r.infer(&profile(&subs)).value(), GroupValue::NonUS);
    }

    #[test]
    fn related_subreddit_lookup() {
        let emb = HashMap::from([
            ("personalfinance".to_string(), vec![1.0, 0.0]),
            ("investing".to_string(), vec![0.9, 0.1]),
            ("creditcards".to_string(), vec![0.8, 0.2]),
            ("gaming".to_string(), vec![0.0, 1.0]),
        ]);
        let allow = HashMap::from([(
            "PersonalFinance".to_string(),
            HashSet::from(["investing".to_string(), "creditcards".to_string(), "gaming".to_string()]),
        )]);
        let rel = related_subreddits("PersonalFinance", &emb, 2, &allow);
        assert_eq!(rel, HashSet::from(["investing".to_string(), "creditcards".to_string()]));
        assert!(related_subreddits("PersonalFinance", &emb, 2, &HashMap::new()).is_empty());
        assert!(related_subreddits("missing", &emb, 2, &allow).is_empty());
    }

    #[test]
    fn related_k1_two_subreddits() {
        let emb = HashMap::from([("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![-3.0, 1.0])]);
        let allow = HashMap::from([("a".to_string(), HashSet::from(["b".to_string()]))]);
        assert_eq!(related_subreddits("a", &emb, 1, &allow), HashSet::from(["b".to_string()]));
    }
}
