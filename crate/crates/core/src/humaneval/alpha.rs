use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Nominal,
    Ordinal,
    Interval,
}

/// Krippendorff's alpha for an annotator × item matrix with missing cells.
/// Items with fewer than two ratings are not pairable and are ignored. When
/// every pairable rating carries the same value there is no disagreement to
/// expect and the result is 1.
pub fn krippendorff_alpha(ratings: &[Vec<Option<u8>>], level: Level) -> Result<f64> {
    if ratings.len() < 2 {
        return Err(Error::InvalidInput("alpha needs at least two annotators".into()));
    }
    let items = ratings.iter().map(Vec::len).max().unwrap_or(0);
    let units: Vec<Vec<u8>> = (0..items)
        .map(|i| ratings.iter().filter_map(|row| row.get(i).copied().flatten()).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.is_empty() {
        return Err(Error::Undefined("no co-rated items"));
    }

    // coincidence matrix over observed values
    let mut coincidence: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    for u in &units {
        let w = 1.0 / (u.len() - 1) as f64;
        for (i, a) in u.iter().enumerate() {
            for (j, b) in u.iter().enumerate() {
                if i != j {
                    *coincidence.entry((*a, *b)).or_default() += w;
                }
            }
        }
    }
    let mut marginals: BTreeMap<u8, f64> = BTreeMap::new();
    for ((c, _), o) in &coincidence {
        *marginals.entry(*c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let values: Vec<u8> = marginals.keys().copied().collect();
    let delta = |c: u8, k: u8| -> f64 {
        match level {
            Level::Nominal => (c != k) as u8 as f64,
            Level::Interval => (c as f64 - k as f64).powi(2),
            Level::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let between: f64 = values.iter().filter(|g| (lo..=hi).contains(*g)).map(|g| marginals[g]).sum();
                (between - (marginals[&lo] + marginals[&hi]) / 2.0).powi(2)
            }
        }
    };
    let observed: f64 = coincidence.iter().map(|((c, k), o)| o * delta(*c, *k)).sum();
    let mut expected = 0.0;
    for &c in &values {
        for &k in &values {
            expected += marginals[&c] * marginals[&k] * delta(c, k);
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}
