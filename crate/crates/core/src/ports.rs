//! Pluggable external components (sentence encoder, language detector,
//! named-entity recognizer, geocoder, dependency parser) with deterministic
//! offline implementations.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::words;

/// 64-bit FNV-1a, stable across platforms and runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub trait SentenceEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f32>>;
}

/// Bag-of-words encoder: each word hashes to a fixed pseudo-random vector and
/// a sentence is the mean of its word vectors.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEncoder { dim, seed }
    }

    pub fn word_vector(&self, word: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ self.seed);
        (0..self.dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }
}

impl Default for HashEncoder {
    fn default() -> Self {
        HashEncoder::new(64, 0x5eed)
    }
}

impl SentenceEncoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>> {
        let mut tokens = words(text);
        if tokens.is_empty() {
            tokens.push("<empty>".to_string());
        }
        let mut acc = vec![0f32; self.dim];
        for t in &tokens {
            for (a, v) in acc.iter_mut().zip(self.word_vector(t)) {
                *a += v;
            }
        }
        let n = tokens.len() as f32;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

pub trait LanguageDetector: Send + Sync {
    fn is_english(&self, text: &str) -> bool;
}

/// Treats text as English when enough of its letters are ASCII.
#[derive(Debug, Clone)]
pub struct AsciiRatioDetector {
    pub min_ratio: f64,
}

impl Default for AsciiRatioDetector {
    fn default() -> Self {
        AsciiRatioDetector { min_ratio: 0.9 }
    }
}

impl LanguageDetector for AsciiRatioDetector {
    fn is_english(&self, text: &str) -> bool {
        let letters = text.chars().filter(|c| c.is_alphabetic()).count();
        if letters == 0 {
            return false;
        }
        let ascii = text
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .count();
        ascii as f64 / letters as f64 >= self.min_ratio
    }
}

/// A recognized location mention, byte offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub trait EntityRecognizer: Send + Sync {
    fn locations(&self, text: &str) -> Result<Vec<Entity>>;
}

pub trait Geocoder: Send + Sync {
    /// Country for a place name, `None` when the place is unknown.
    fn country(&self, place: &str) -> Result<Option<String>>;
}

/// Offline place -> country table loaded from `place<TAB>country` lines.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    places: HashMap<String, String>,
    names: Vec<String>,
}

impl Gazetteer {
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut g = Gazetteer::default();
        for (k, v) in pairs {
            let k = k.into();
            g.places.insert(k.to_lowercase(), v.into());
            g.names.push(k);
        }
        // Longest names first so "New York City" wins over "York".
        g.names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        g.names.dedup();
        g
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pairs = read_key_values(path)?;
        Ok(Gazetteer::from_pairs(pairs))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Geocoder for Gazetteer {
    fn country(&self, place: &str) -> Result<Option<String>> {
        Ok(self.places.get(&place.trim().to_lowercase()).cloned())
    }
}

/// Reads `key<TAB>value` lines; blank lines and `#` comments are skipped.
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('\t').ok_or_else(|| {
            Error::Parse(format!("{}:{}: expected key<TAB>value", path.display(), lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Dictionary NER: finds case-sensitive, word-bounded occurrences of
/// gazetteer names.
#[derive(Debug, Clone)]
pub struct GazetteerNer {
    names: Vec<String>,
}

impl GazetteerNer {
    pub fn new(gazetteer: &Gazetteer) -> Self {
        GazetteerNer {
            names: gazetteer.names().to_vec(),
        }
    }
}

impl EntityRecognizer for GazetteerNer {
    fn locations(&self, text: &str) -> Result<Vec<Entity>> {
        let mut taken = vec![false; text.len()];
        let mut found = Vec::new();
        for name in &self.names {
            for (start, _) in text.match_indices(name.as_str()) {
                let end = start + name.len();
                let before_ok = text[..start]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric());
                let after_ok = text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                if before_ok && after_ok && !taken[start..end].iter().any(|t| *t) {
                    taken[start..end].iter_mut().for_each(|t| *t = true);
                    found.push(Entity {
                        text: name.clone(),
                        start,
                        end,
                    });
                }
            }
        }
        found.sort_by_key(|e| e.start);
        Ok(found)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    pub form: String,
    /// 1-based index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

pub trait DependencyParser: Send + Sync {
    fn parse(&self, sentence: &str) -> Result<Vec<DepToken>>;
}

pub const WH_WORDS: &[&str] = &[
    "what", "where", "when", "who", "whom", "whose", "which", "why", "how",
];

pub const AUX_WORDS: &[&str] = &[
    "do", "does", "did", "can", "could", "would", "should", "will", "shall", "may", "might",
    "must", "is", "are", "was", "were", "am", "have", "has", "had",
];

const FUNCTION_WORDS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "this", "that", "these", "those", "a", "an", "the", "to", "of",
    "in", "on", "at", "for", "with", "about", "from", "by", "as", "not", "n't", "any", "some",
    "there", "if", "or", "and", "but", "so", "much", "many", "more", "long", "old", "far",
];

/// Rule-based parser for short questions. Picks a root verb (the first
/// content word after an auxiliary, else the auxiliary itself, else the first
/// content word) and attaches every other token to it.
#[derive(Debug, Clone, Default)]
pub struct HeuristicParser;

impl DependencyParser for HeuristicParser {
    fn parse(&self, sentence: &str) -> Result<Vec<DepToken>> {
        let toks = words(sentence);
        if toks.is_empty() {
            return Ok(Vec::new());
        }
        let is_wh = |t: &str| WH_WORDS.contains(&t);
        let is_aux = |t: &str| AUX_WORDS.contains(&t);
        let is_content = |t: &str| !is_wh(t) && !is_aux(t) && !FUNCTION_WORDS.contains(&t);

        let first_aux = toks.iter().position(|t| is_aux(t));
        let root = first_aux
            .and_then(|a| (a + 1..toks.len()).find(|&i| is_content(&toks[i])))
            .or(first_aux)
            .or_else(|| toks.iter().position(|t| is_content(t)))
            .unwrap_or(0);

        let parsed = toks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (head, deprel) = if i == root {
                    (0, "root")
                } else if is_wh(t) {
                    let rel = match t.as_str() {
                        "where" | "when" | "why" | "how" => "advmod",
                        "who" if i < root => "nsubj",
                        _ => "obj",
                    };
                    (root + 1, rel)
                } else if is_aux(t) {
                    (root + 1, "aux")
                } else {
                    (root + 1, "dep")
                };
                DepToken {
                    form: t.clone(),
                    head,
                    deprel: deprel.to_string(),
                }
            })
            .collect();
        Ok(parsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_encoder_is_deterministic_bag_of_words() {
        let enc = HashEncoder::default();
        assert_eq!(enc.encode("a b c").unwrap(), enc.encode("c b a").unwrap());
        assert_ne!(enc.encode("a b").unwrap(), enc.encode("a d").unwrap());
        assert_eq!(enc.encode("x").unwrap().len(), 64);
    }

    #[test]
    fn ascii_detector() {
        let d = AsciiRatioDetector::default();
        assert!(d.is_english("plain english text"));
        assert!(!d.is_english("это русский текст"));
        assert!(!d.is_english("1234 !!"));
    }

    #[test]
    fn ner_prefers_longest_names() {
        let g = Gazetteer::from_pairs([("New York City", "United States"), ("York", "United Kingdom")]);
        let ner = GazetteerNer::new(&g);
        let ents = ner.locations("I moved to New York City from York.").unwrap();
        let names: Vec<_> = ents.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(names, ["New York City", "York"]);
    }

    #[test]
    fn parser_roots() {
        let p = HeuristicParser;
        let toks = p.parse("where do you live?").unwrap();
        assert_eq!(toks[3].deprel, "root");
        assert_eq!((toks[0].head, toks[0].deprel.as_str()), (4, "advmod"));
        let toks = p.parse("you did what?").unwrap();
        assert_eq!(toks[1].deprel, "root");
        assert_eq!(toks[2].head, 2);
    }
}
