//! Annotation packets for the human study and summaries of the returned
//! ratings.

mod alpha;

pub use alpha::{krippendorff_alpha, Level};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::QuestionPair;
use crate::generation::QuestionGenerator;
use crate::groups::{GroupCategory, GroupLabel, GroupValue};
use crate::stats::{mean, wilcoxon_signed_rank};

pub const DEFAULT_POSTS: usize = 10;
pub const DEFAULT_PERCENTILE: f64 = 10.0;
pub const MAX_QUESTIONS_PER_ANNOTATOR: usize = 50;

/// Up to `n` distinct posts with a divisive pair, chosen with a seeded
/// shuffle. Pairs must already be labeled.
pub fn sample_divisive_posts(pairs: &[QuestionPair], n: usize, seed: u64) -> Vec<String> {
    let mut posts: Vec<String> = pairs
        .iter()
        .filter(|p| p.divisive)
        .map(|p| p.post_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    posts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    posts.truncate(n);
    posts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    GroundTruth,
    TextOnly,
    Social(GroupValue),
}

impl Source {
    pub fn family(self) -> &'static str {
        match self {
            Source::GroundTruth => "ground_truth",
            Source::TextOnly => "text_only",
            Source::Social(_) => "social_token",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Social(v) => write!(f, "social_token:{v}"),
            other => f.write_str(other.family()),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground_truth" => Ok(Source::GroundTruth),
            "text_only" => Ok(Source::TextOnly),
            _ => s
                .strip_prefix("social_token:")
                .ok_or_else(|| Error::Parse(format!("unknown source {s:?}")))?
                .parse()
                .map(Source::Social),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketPost {
    pub post_id: String,
    pub subreddit: String,
    pub post_text: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketItem {
    pub item_id: String,
    pub question: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub packet_id: String,
    pub post: PacketPost,
    pub category: GroupCategory,
    pub seed: u64,
    /// In presentation order.
    pub items: Vec<PacketItem>,
}

impl Packet {
    /// Source → question, independent of presentation order.
    pub fn by_source(&self) -> BTreeMap<Source, String> {
        self.items.iter().map(|i| (i.source, i.question.clone())).collect()
    }
}

/// One packet per post: ground truth, a text-only question and one
/// social-token question per group value, presented in seeded random order.
/// Posts where any generation fails are dropped with a warning.
pub fn build_packets(
    posts: &[PacketPost],
    category: GroupCategory,
    text_only: &dyn QuestionGenerator,
    social: &dyn QuestionGenerator,
    seed: u64,
) -> Vec<Packet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [g1, g2] = category.pair();
    let mut packets = Vec::new();
    for post in posts {
        let generated = (|| -> Result<Vec<(Source, String)>> {
            Ok(vec![
                (Source::GroundTruth, post.ground_truth.clone()),
                (Source::TextOnly, text_only.generate(&post.post_text, None)?),
                (Source::Social(g1), social.generate(&post.post_text, Some(&GroupLabel::new(category, g1)?))?),
                (Source::Social(g2), social.generate(&post.post_text, Some(&GroupLabel::new(category, g2)?))?),
            ])
        })();
        let mut qs = match generated {
            Ok(q) => q,
            Err(e) => {
                log::warn!("dropping post {} from packets: {e}", post.post_id);
                continue;
            }
        };
        qs.shuffle(&mut rng);
        let packet_id = format!("{}-{}", category.as_str().to_lowercase(), post.post_id);
        let items = qs
            .into_iter()
            .enumerate()
            .map(|(i, (source, question))| PacketItem { item_id: format!("{packet_id}-q{}", i + 1), question, source })
            .collect();
        packets.push(Packet { packet_id, post: post.clone(), category, seed, items });
    }
    packets
}

/// Writes annotator files (`annotator_<k>.csv`, whole packets, at most
/// `cap` questions each) without any provenance, plus `answer_key.csv`.
pub fn export_packets(packets: &[Packet], dir: &Path, cap: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<Vec<&Packet>> = vec![Vec::new()];
    let mut count = 0;
    for p in packets {
        if count + p.items.len() > cap && count > 0 {
            files.push(Vec::new());
            count = 0;
        }
        files.last_mut().unwrap().push(p);
        count += p.items.len();
    }
    let mut paths = Vec::new();
    for (k, group) in files.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
        let path = dir.join(format!("annotator_{}.csv", k + 1));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "packet_id", "item_id", "subreddit", "post", "question", "answerable", "relevant",
            "understandable", "group_guess",
        ])?;
        for p in group {
            for it in &p.items {
                w.write_record([&p.packet_id, &it.item_id, &p.post.subreddit, &p.post.post_text, &it.question, "", "", "", ""])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    let key_path = dir.join("answer_key.csv");
    let mut w = csv::Writer::from_path(&key_path)?;
    w.write_record(["packet_id", "item_id", "category", "subreddit", "source", "seed"])?;
    for p in packets {
        for it in &p.items {
            w.write_record([
                p.packet_id.as_str(),
                &it.item_id,
                p.category.as_str(),
                &p.post.subreddit,
                &it.source.to_string(),
                &p.seed.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&key_path, e))?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub packet_id: String,
    pub item_id: String,
    pub category: GroupCategory,
    pub subreddit: String,
    pub source: Source,
}

pub fn read_key(path: &Path) -> Result<Vec<KeyEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        out.push(KeyEntry {
            packet_id: field(0),
            item_id: field(1),
            category: field(2).parse()?,
            subreddit: field(3),
            source: field(4).parse()?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rating {
    pub annotator: String,
    pub packet_id: String,
    pub item_id: String,
    pub answerable: u8,
    pub relevant: u8,
    pub understandable: u8,
    pub group_guess: Option<GroupValue>,
}

fn scale(field: &str, value: &str, item: &str) -> Result<u8> {
    match value.trim().parse::<u8>() {
        Ok(v) if (1..=5).contains(&v) => Ok(v),
        _ => Err(Error::InvalidInput(format!("{item}: {field} must be 1-5, got {value:?}"))),
    }
}

/// Reads a completed annotator file. Rows with all ratings blank are skipped.
pub fn read_ratings(path: &Path, annotator: &str) -> Result<Vec<Rating>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column {name}", path.display())))
    };
    let (ip, ii, ia, ir, iu, ig) =
        (col("packet_id")?, col("item_id")?, col("answerable")?, col("relevant")?, col("understandable")?, col("group_guess")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim();
        let item = get(ii);
        if get(ia).is_empty() && get(ir).is_empty() && get(iu).is_empty() {
            continue;
        }
        out.push(Rating {
            annotator: annotator.to_string(),
            packet_id: get(ip).to_string(),
            item_id: item.to_string(),
            answerable: scale("answerable", get(ia), item)?,
            relevant: scale("relevant", get(ir), item)?,
            understandable: scale("understandable", get(iu), item)?,
            group_guess: match get(ig) {
                "" => None,
                g => Some(g.parse()?),
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub category: GroupCategory,
    pub subreddit: String,
    pub source: String,
    pub n: usize,
    pub answerable: f64,
    pub relevant: f64,
    pub understandable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessRow {
    pub category: GroupCategory,
    pub subreddit: String,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub category: GroupCategory,
    pub dimension: String,
    pub n_pairs: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub means: Vec<MeanRow>,
    pub guesses: Vec<GuessRow>,
    pub significance: Vec<SignificanceRow>,
}

const DIMENSIONS: [&str; 3] = ["answerable", "relevant", "understandable"];

fn dims(r: &Rating) -> [f64; 3] {
    [r.answerable as f64, r.relevant as f64, r.understandable as f64]
}

/// Mean ratings per (category, subreddit, source family), group-guess
/// accuracy on social-token questions, and a Wilcoxon signed-rank test per
/// category and dimension pairing each annotator's text-only rating of a
/// post with their mean rating of the two social-token questions.
pub fn summarize(ratings: &[Rating], key: &[KeyEntry]) -> Result<Summary> {
    let by_item: BTreeMap<&str, &KeyEntry> = key.iter().map(|k| (k.item_id.as_str(), k)).collect();
    let mut cells: BTreeMap<(GroupCategory, String, &str), Vec<[f64; 3]>> = BTreeMap::new();
    let mut guesses: BTreeMap<(GroupCategory, String), (usize, usize)> = BTreeMap::new();
    // (category, annotator, packet) -> (text-only dims, social dims)
    let mut paired: BTreeMap<(GroupCategory, &str, &str), (Option<[f64; 3]>, Vec<[f64; 3]>)> = BTreeMap::new();
    for r in ratings {
        let k = by_item
            .get(r.item_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("rating for unknown item {}", r.item_id)))?;
        cells.entry((k.category, k.subreddit.clone(), k.source.family())).or_default().push(dims(r));
        let slot = paired.entry((k.category, r.annotator.as_str(), k.packet_id.as_str())).or_default();
        match k.source {
            Source::Social(target) => {
                slot.1.push(dims(r));
                if let Some(g) = r.group_guess {
                    let e = guesses.entry((k.category, k.subreddit.clone())).or_default();
                    e.0 += 1;
                    e.1 += (g == target) as usize;
                }
            }
            Source::TextOnly => slot.0 = Some(dims(r)),
            Source::GroundTruth => {}
        }
    }
    let means = cells
        .into_iter()
        .map(|((category, subreddit, source), rows)| {
            let col = |d: usize| mean(&rows.iter().map(|r| r[d]).collect::<Vec<_>>()).unwrap_or(0.0);
            MeanRow { category, subreddit, source: source.into(), n: rows.len(), answerable: col(0), relevant: col(1), understandable: col(2) }
        })
        .collect();
    let guesses = guesses
        .into_iter()
        .map(|((category, subreddit), (n, hit))| GuessRow { category, subreddit, n, accuracy: hit as f64 / n as f64 })
        .collect();

    let mut per_cat: BTreeMap<GroupCategory, (Vec<[f64; 3]>, Vec<[f64; 3]>)> = BTreeMap::new();
    for ((cat, _, _), (text, social)) in paired {
        if let (Some(t), false) = (text, social.is_empty()) {
            let n = social.len() as f64;
            let s = [0, 1, 2].map(|d| social.iter().map(|x| x[d]).sum::<f64>() / n);
            let e = per_cat.entry(cat).or_default();
            e.0.push(t);
            e.1.push(s);
        }
    }
    let mut significance = Vec::new();
    for (category, (text, social)) in per_cat {
        for (d, name) in DIMENSIONS.iter().enumerate() {
            let x: Vec<f64> = social.iter().map(|s| s[d]).collect();
            let y: Vec<f64> = text.iter().map(|t| t[d]).collect();
            let test = wilcoxon_signed_rank(&x, &y)?;
            significance.push(SignificanceRow {
                category,
                dimension: name.to_string(),
                n_pairs: x.len(),
                statistic: test.statistic,
                p_value: test.p_value,
            });
        }
    }
    Ok(Summary { means, guesses, significance })
}

impl Summary {
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("ratings_by_source.csv"))?;
        w.write_record(["category", "subreddit", "source", "n", "answerable", "relevant", "understandable"])?;
        for m in &self.means {
            w.write_record([
                m.category.as_str().to_string(),
                m.subreddit.clone(),
                m.source.clone(),
                m.n.to_string(),
                format!("{:.3}", m.answerable),
                format!("{:.3}", m.relevant),
                format!("{:.3}", m.understandable),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("group_guess_accuracy.csv"))?;
        w.write_record(["category", "subreddit", "n", "accuracy"])?;
        for g in &self.guesses {
            w.write_record([g.category.as_str().to_string(), g.subreddit.clone(), g.n.to_string(), format!("{:.3}", g.accuracy)])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("significance.csv"))?;
        w.write_record(["category", "dimension", "n_pairs", "w_plus", "p_value"])?;
        for s in &self.significance {
            w.write_record([s.category.as_str().to_string(), s.dimension.clone(), s.n_pairs.to_string(), format!("{}", s.statistic), format!("{:.4}", s.p_value)])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    }
}

/// Annotator × item matrix of one rating dimension for alpha.
pub fn rating_matrix(ratings: &[Rating], dimension: usize) -> Vec<Vec<Option<u8>>> {
    let annotators: BTreeSet<&str> = ratings.iter().map(|r| r.annotator.as_str()).collect();
    let items: BTreeSet<&str> = ratings.iter().map(|r| r.item_id.as_str()).collect();
    let items: Vec<&str> = items.into_iter().collect();
    annotators
        .iter()
        .map(|a| {
            items
                .iter()
                .map(|i| {
                    ratings
                        .iter()
                        .find(|r| r.annotator == *a && r.item_id == *i)
                        .map(|r| [r.answerable, r.relevant, r.understandable][dimension])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::FixedGenerator;

    fn pair(post: &str, divisive: bool) -> QuestionPair {
        QuestionPair {
            post_id: post.into(),
            q1: "a".into(),
            q2: "b".into(),
            group1: GroupLabel::new(GroupCategory::Expertise, GroupValue::Expert).unwrap(),
            group2: GroupLabel::new(GroupCategory::Expertise, GroupValue::Novice).unwrap(),
            similarity: 0.0,
            divisive,
        }
    }

    #[test]
    fn sampling() {
        let pairs: Vec<_> = ["p1", "p2", "p3", "p3", "p4"].iter().enumerate().map(|(i, p)| pair(p, i != 4)).collect();
        let s = sample_divisive_posts(&pairs, 10, 1);
        assert_eq!(s.len(), 3);
        assert!(!s.contains(&"p4".to_string()));
        assert!(sample_divisive_posts(&pairs, 0, 1).is_empty());
        assert_eq!(s, sample_divisive_posts(&pairs, 10, 1));
    }

    fn posts(n: usize) -> Vec<PacketPost> {
        (0..n)
            .map(|i| PacketPost {
                post_id: format!("p{i}"),
                subreddit: "personalfinance".into(),
                post_text: format!("post number {i}"),
                ground_truth: format!("truth {i}?"),
            })
            .collect()
    }

    fn generators() -> (FixedGenerator, FixedGenerator) {
        let expert = GroupLabel::new(GroupCategory::Expertise, GroupValue::Expert).unwrap();
        let novice = GroupLabel::new(GroupCategory::Expertise, GroupValue::Novice).unwrap();
        (
            FixedGenerator { default: "plain?".into(), by_group: vec![] },
            FixedGenerator { default: "?".into(), by_group: vec![(expert, "expert q?".into()), (novice, "novice q?".into())] },
        )
    }

    #[test]
    fn packets_have_four_questions_and_key_inverts() {
        let (t, s) = generators();
        let mut ps = posts(13);
        ps[4].post_text = " ".into(); // generation fails and the post is dropped
        let packets = build_packets(&ps, GroupCategory::Expertise, &t, &s, 7);
        assert_eq!(packets.len(), 12);
        for p in &packets {
            assert_eq!(p.items.len(), 4);
            let m = p.by_source();
            assert_eq!(m[&Source::Social(GroupValue::Expert)], "expert q?");
            assert_eq!(m[&Source::Social(GroupValue::Novice)], "novice q?");
            assert_eq!(m[&Source::TextOnly], "plain?");
            assert_eq!(m[&Source::GroundTruth], p.post.ground_truth);
        }
        assert_eq!(packets, build_packets(&ps, GroupCategory::Expertise, &t, &s, 7));

        let dir = tempfile::tempdir().unwrap();
        let files = export_packets(&packets, dir.path(), MAX_QUESTIONS_PER_ANNOTATOR).unwrap();
        assert_eq!(files.len(), 1);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(!text.contains("social") && !text.contains("text_only") && !text.contains("Expert"));
        let key = read_key(&dir.path().join("answer_key.csv")).unwrap();
        let mut r = csv::Reader::from_path(&files[0]).unwrap();
        for rec in r.records() {
            let rec = rec.unwrap();
            let k = key.iter().find(|k| k.item_id == &rec[1]).unwrap();
            let p = packets.iter().find(|p| p.packet_id == k.packet_id).unwrap();
            assert_eq!(p.by_source()[&k.source], &rec[4]);
        }
        let more = build_packets(&posts(20), GroupCategory::Expertise, &t, &s, 7);
        let files = export_packets(&more, &dir.path().join("more"), MAX_QUESTIONS_PER_ANNOTATOR).unwrap();
        assert_eq!(files.len(), 2);
    }

    fn rating(annotator: &str, item: &str, packet: &str, v: [u8; 3], guess: Option<GroupValue>) -> Rating {
        Rating {
            annotator: annotator.into(),
            packet_id: packet.into(),
            item_id: item.into(),
            answerable: v[0],
            relevant: v[1],
            understandable: v[2],
            group_guess: guess,
        }
    }

    fn key(item: &str, packet: &str, source: Source) -> KeyEntry {
        KeyEntry { packet_id: packet.into(), item_id: item.into(), category: GroupCategory::Expertise, subreddit: "pf".into(), source }
    }

    #[test]
    fn summary_of_two_annotators() {
        let keys = vec![
            key("i1", "k", Source::TextOnly),
            key("i2", "k", Source::Social(GroupValue::Expert)),
            key("i3", "k", Source::Social(GroupValue::Novice)),
            key("i4", "k", Source::GroundTruth),
        ];
        let ratings = vec![
            rating("a", "i1", "k", [4, 3, 5], None),
            rating("a", "i2", "k", [5, 5, 5], Some(GroupValue::Expert)),
            rating("a", "i3", "k", [3, 4, 4], Some(GroupValue::Novice)),
            rating("a", "i4", "k", [2, 2, 2], None),
            rating("b", "i1", "k", [2, 3, 3], None),
            rating("b", "i2", "k", [4, 4, 4], Some(GroupValue::Novice)),
            rating("b", "i3", "k", [1, 2, 1], Some(GroupValue::Novice)),
            rating("b", "i4", "k", [4, 4, 4], None),
        ];
        let s = summarize(&ratings, &keys).unwrap();
        let row = |src: &str| s.means.iter().find(|m| m.source == src).unwrap();
        assert_eq!(row("text_only").answerable, 3.0);
        assert_eq!(row("text_only").understandable, 4.0);
        assert_eq!(row("social_token").n, 4);
        assert_eq!(row("social_token").answerable, 13.0 / 4.0);
        assert_eq!(row("social_token").relevant, 15.0 / 4.0);
        assert_eq!(row("ground_truth").relevant, 3.0);
        assert_eq!(s.guesses[0].n, 4);
        assert_eq!(s.guesses[0].accuracy, 0.75);
        assert_eq!(s.significance.len(), 3);
        assert_eq!(s, summarize(&ratings, &keys).unwrap());

        // identical ratings: equal means, p reported as 1
        let flat: Vec<Rating> = ratings.iter().map(|r| Rating { answerable: 3, relevant: 3, understandable: 3, ..r.clone() }).collect();
        let s = summarize(&flat, &keys).unwrap();
        assert!(s.means.iter().all(|m| m.answerable == 3.0));
        assert!(s.significance.iter().all(|r| r.p_value == 1.0));
        assert_eq!(krippendorff_alpha(&rating_matrix(&flat, 0), Level::Ordinal).unwrap(), 1.0);
    }

    #[test]
    fn rating_import_checks_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(
            &path,
            "packet_id,item_id,subreddit,post,question,answerable,relevant,understandable,group_guess\n\
             k,i1,pf,post,q,4,5,3,Expert\nk,i2,pf,post,q,,,,\n",
        )
        .unwrap();
        let r = read_ratings(&path, "a").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].group_guess, Some(GroupValue::Expert));
        std::fs::write(&path, "packet_id,item_id,subreddit,post,question,answerable,relevant,understandable,group_guess\nk,i1,pf,p,q,6,5,3,\n").unwrap();
        assert!(read_ratings(&path, "a").is_err());
    }
}
