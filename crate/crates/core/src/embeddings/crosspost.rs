use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::profile::AskerProfile;

/// Normalized PMI from counts: `ln(p_ij / (p_i p_j)) / -ln(p_ij)`. A zero
/// joint count maps to 0, and `joint == grand` (the only event) maps to 1.
pub fn npmi(joint: u64, row_total: u64, col_total: u64, grand_total: u64) -> Result<f64> {
    if grand_total == 0 {
        return Err(Error::InvalidInput("grand total must be positive".into()));
    }
    if joint > row_total.min(col_total) || row_total > grand_total || col_total > grand_total {
        return Err(Error::InvalidInput(format!(
            "inconsistent counts joint={joint} row={row_total} col={col_total} grand={grand_total}"
        )));
    }
    if joint == 0 {
        return Ok(0.0);
    }
    if joint == grand_total {
        return Ok(1.0);
    }
    let (j, r, c, g) = (joint as f64, row_total as f64, col_total as f64, grand_total as f64);
    let pmi = j.ln() + g.ln() - r.ln() - c.ln();
    Ok((pmi / (g.ln() - j.ln())).clamp(-1.0, 1.0))
}

/// Subreddit x asker NPMI matrix over binary "asker commented in subreddit"
/// events.
#[derive(Debug, Clone)]
pub struct CrosspostMatrix {
    pub subreddits: Vec<String>,
    pub askers: Vec<String>,
    pub values: DMatrix<f64>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub grand_total: u64,
}

impl CrosspostMatrix {
    pub fn build(profiles: &[AskerProfile]) -> Self {
        let presence: Vec<BTreeSet<String>> = profiles
            .iter()
            .map(|p| p.history.iter().map(|h| h.subreddit.to_lowercase()).collect())
            .collect();
        let subreddits: Vec<String> = presence
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = subreddits
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut row_totals = vec![0u64; subreddits.len()];
        let col_totals: Vec<u64> = presence.iter().map(|s| s.len() as u64).collect();
        for set in &presence {
            for s in set {
                row_totals[index[s.as_str()]] += 1;
            }
        }
        let grand_total: u64 = col_totals.iter().sum();
        let mut values = DMatrix::zeros(subreddits.len(), profiles.len());
        for (j, set) in presence.iter().enumerate() {
            for s in set {
                let i = index[s.as_str()];
                values[(i, j)] = npmi(1, row_totals[i], col_totals[j], grand_total)
                    .expect("counts are consistent by construction");
            }
        }
        CrosspostMatrix {
            subreddits,
            askers: profiles.iter().map(|p| p.asker_id.clone()).collect(),
            values,
            row_totals,
            col_totals,
            grand_total,
        }
    }
}
