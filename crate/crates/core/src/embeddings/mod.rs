//! Continuous asker representations from subreddit co-posting and text.

mod crosspost;
mod doc2vec;
mod svd;

pub use crosspost::{npmi, CrosspostMatrix};
pub use doc2vec::{TextEmbedder, TextEmbedderConfig};
pub use svd::TruncatedSvd;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::profile::AskerProfile;

pub const EMBEDDING_DIM: usize = 100;

pub type SubredditEmbeddings = HashMap<String, Vec<f32>>;

/// Unweighted mean of the embeddings of the distinct subreddits in the
/// history; `None` when none of them has an embedding.
pub fn asker_subreddit_embedding(
    profile: &AskerProfile,
    embeddings: &SubredditEmbeddings,
) -> Option<Vec<f32>> {
    let distinct: BTreeSet<String> = profile
        .history
        .iter()
        .map(|h| h.subreddit.to_lowercase())
        .collect();
    let vecs: Vec<&Vec<f32>> = distinct.iter().filter_map(|s| embeddings.get(s)).collect();
    mean_vector(&vecs)
}

/// Mean of the per-comment document vectors of the history.
pub fn asker_text_embedding(profile: &AskerProfile, model: &TextEmbedder) -> Option<Vec<f32>> {
    let vecs: Vec<Vec<f32>> = profile
        .history
        .iter()
        .filter_map(|h| model.embed(&h.body))
        .collect();
    mean_vector(&vecs.iter().collect::<Vec<_>>())
}

pub(crate) fn mean_vector(vecs: &[&Vec<f32>]) -> Option<Vec<f32>> {
    let first = vecs.first()?;
    let mut acc = vec![0f64; first.len()];
    for v in vecs {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += *x as f64;
        }
    }
    let n = vecs.len() as f64;
    Some(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// One embedding per line: `name v1 v2 ... vd`.
pub fn write_embeddings<W: Write>(mut w: W, embeddings: &HashMap<String, Vec<f32>>) -> Result<()> {
    let mut names: Vec<&String> = embeddings.keys().collect();
    names.sort();
    for name in names {
        let vals: Vec<String> = embeddings[name].iter().map(|v| v.to_string()).collect();
        writeln!(w, "{name} {}", vals.join(" ")).map_err(|e| Error::io("<embeddings>", e))?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<HashMap<String, Vec<f32>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(name) = parts.next() else { continue };
        let vals = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if *dim.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Parse(format!("{}:{}: inconsistent dimension", path.display(), i + 1)));
        }
        out.insert(name.to_string(), vals);
    }
    Ok(out)
}
