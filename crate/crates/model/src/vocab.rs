//! Word-level vocabulary with reserved special and group tokens.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use socq_core::{GroupCategory, GroupLabel};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const SOCIAL_EMB: &str = "<social_emb>";
pub const SPECIALS: [&str; 5] = [PAD, BOS, EOS, UNK, SOCIAL_EMB];

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const SOCIAL_EMB_ID: u32 = 4;

/// Lowercased words plus individual punctuation marks.
pub fn tokenize(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:'[\p{L}\p{N}]+)*|[^\s\p{L}\p{N}]").unwrap());
    re.find_iter(text).map(|m| m.as_str().to_lowercase()).collect()
}

pub fn group_token(label: &GroupLabel) -> String {
    format!("{{GROUP_{}_{}}}", label.category().as_str(), label.value())
}

/// Every group token, one per (category, value) including UNK.
pub fn all_group_tokens() -> Vec<String> {
    GroupCategory::ALL
        .iter()
        .flat_map(|c| c.values().map(move |v| GroupLabel::new(*c, v).expect("catalog value")))
        .map(|l| group_token(&l))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    has_group_tokens: bool,
}

impl Vocab {
    /// Specials, then corpus words by descending frequency (ties
    /// alphabetical), then group tokens when requested. Corpus words never
    /// collide with specials or group tokens because the tokenizer splits
    /// their punctuation.
    pub fn build<S: AsRef<str>>(texts: &[S], min_count: usize, with_group_tokens: bool) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in tokenize(t.as_ref()) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(|(w, _)| w));
        if with_group_tokens {
            tokens.extend(all_group_tokens());
        }
        Self::from_tokens(tokens, with_group_tokens)
    }

    pub fn from_tokens(tokens: Vec<String>, has_group_tokens: bool) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index, has_group_tokens }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_group_tokens(&self) -> bool {
        self.has_group_tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or(UNK, String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Id of the label's group token, or `None` when the vocabulary has no
    /// group tokens.
    pub fn group_id(&self, label: &GroupLabel) -> Option<u32> {
        self.get(&group_token(label))
    }

    /// Ids the decoder must never emit.
    pub fn non_output_ids(&self) -> Vec<u32> {
        let mut ids = vec![PAD_ID, BOS_ID, UNK_ID, SOCIAL_EMB_ID];
        if self.has_group_tokens {
            ids.extend(all_group_tokens().iter().filter_map(|t| self.get(t)));
        }
        ids
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i != EOS_ID && i != PAD_ID && i != BOS_ID)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
