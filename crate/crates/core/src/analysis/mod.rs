//! Checks that social groups actually ask different questions: lexicon
//! category rates compared with a rank test, and a classifier predicting the
//! asker's group from (question, post) embeddings.

mod classifier;
mod pca;

pub use classifier::{
    encode_pair, subset_group_specific, ClassifierConfig, GroupClassifier, PairFeature,
};
pub use pca::Pca;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mann_whitney_u, mean};
use crate::text::words;

#[derive(Debug, Clone, Default)]
pub struct CategoryLexicon {
    /// category → (exact words, prefixes)
    categories: BTreeMap<String, (Vec<String>, Vec<String>)>,
}

impl CategoryLexicon {
    /// Parses `CATEGORY<TAB>word1 word2 prefix*` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = CategoryLexicon::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, entries) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("lexicon line {}: missing tab", n + 1)))?;
            let slot = lex.categories.entry(cat.trim().to_string()).or_default();
            for e in entries.split_whitespace() {
                let e = e.to_lowercase();
                match e.strip_suffix('*') {
                    Some(p) if !p.is_empty() => slot.1.push(p.to_string()),
                    Some(_) => return Err(Error::Parse(format!("lexicon line {}: bare '*'", n + 1))),
                    None => slot.0.push(e),
                }
            }
        }
        if let Some((cat, _)) = lex.categories.iter().find(|(_, (w, p))| w.is_empty() && p.is_empty()) {
            return Err(Error::Parse(format!("lexicon category {cat} is empty")));
        }
        if lex.categories.is_empty() {
            return Err(Error::Empty("lexicon"));
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn matches(&self, category: &str, token: &str) -> bool {
        self.categories.get(category).is_some_and(|(words, prefixes)| {
            words.iter().any(|w| w == token) || prefixes.iter().any(|p| token.starts_with(p.as_str()))
        })
    }
}

/// Share of the question's tokens that fall in each category.
pub fn category_frequency(question: &str, lexicon: &CategoryLexicon) -> BTreeMap<String, f64> {
    let toks = words(question);
    lexicon
        .categories()
        .map(|c| {
            let hits = toks.iter().filter(|t| lexicon.matches(c, t)).count();
            let f = if toks.is_empty() { 0.0 } else { hits as f64 / toks.len() as f64 };
            (c.to_string(), f)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDiff {
    pub category: String,
    pub freq_a: f64,
    pub freq_b: f64,
    pub difference: f64,
    pub u: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDiffReport {
    pub group_a: String,
    pub group_b: String,
    pub rows: Vec<CategoryDiff>,
}

/// Mean per-question category rate for each group, ranked by absolute
/// difference (ties by name) and cut to `top_k`.
pub fn group_diff_report<S: AsRef<str>>(
    (name_a, questions_a): (&str, &[S]),
    (name_b, questions_b): (&str, &[S]),
    lexicon: &CategoryLexicon,
    top_k: usize,
) -> Result<GroupDiffReport> {
    if questions_a.is_empty() || questions_b.is_empty() {
        return Err(Error::Empty("group questions"));
    }
    let fa: Vec<_> = questions_a.iter().map(|q| category_frequency(q.as_ref(), lexicon)).collect();
    let fb: Vec<_> = questions_b.iter().map(|q| category_frequency(q.as_ref(), lexicon)).collect();
    let mut rows = Vec::new();
    for cat in lexicon.categories() {
        let a: Vec<f64> = fa.iter().map(|m| m[cat]).collect();
        let b: Vec<f64> = fb.iter().map(|m| m[cat]).collect();
        let (ma, mb) = (mean(&a).unwrap_or(0.0), mean(&b).unwrap_or(0.0));
        let test = mann_whitney_u(&a, &b)?;
        rows.push(CategoryDiff {
            category: cat.to_string(),
            freq_a: ma,
            freq_b: mb,
            difference: (ma - mb).abs(),
            u: test.statistic,
            p_value: test.p_value,
        });
    }
    rows.sort_by(|x, y| y.difference.total_cmp(&x.difference).then_with(|| x.category.cmp(&y.category)));
    rows.truncate(top_k);
    Ok(GroupDiffReport { group_a: name_a.into(), group_b: name_b.into(), rows })
}

impl GroupDiffReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["category", &self.group_a, &self.group_b, "abs_difference", "u", "p_value"])?;
        for r in &self.rows {
            w.write_record([
                r.category.clone(),
                format!("{:.6}", r.freq_a),
                format!("{:.6}", r.freq_b),
                format!("{:.6}", r.difference),
                format!("{}", r.u),
                format!("{:.4}", r.p_value),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
