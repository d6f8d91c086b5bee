//! Small statistics toolkit: nearest-rank percentiles, rank tests,
//! correlations and vector similarity.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Nearest-rank percentile: the smallest value `v` in the population such
/// that at least `p`% of the population is `<= v`.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile population"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidInput(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    // Guard against 0.75 * 4 evaluating to 3.0000000000000004.
    let rank = ((p / 100.0 * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        sum += t * t * t - t;
        i = j + 1;
    }
    sum
}

fn two_sided_normal(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pooled sample size up to which Mann-Whitney and Wilcoxon p-values are
/// computed exactly.
pub const EXACT_LIMIT: usize = 20;

/// Mann-Whitney U for `sample_a` (ties count one half), with a two-sided
/// p-value. Exact permutation distribution for pooled n <= 20, otherwise the
/// tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64]) -> Result<RankTest> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    let (na, nb) = (sample_a.len(), sample_b.len());
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let mu = (na * nb) as f64 / 2.0;
    let n = na + nb;

    let p_value = if n <= EXACT_LIMIT {
        // Distribution of the doubled rank sum of a size-na subset.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![vec![0f64; max_sum + 1]; na + 1];
        counts[0][0] = 1.0;
        for &r in &doubled {
            for k in (1..=na).rev() {
                for s in (r..=max_sum).rev() {
                    let prev = counts[k - 1][s - r];
                    if prev > 0.0 {
                        counts[k][s] += prev;
                    }
                }
            }
        }
        let offset = (na * (na + 1)) as f64;
        let observed = (u - mu).abs();
        let mut extreme = 0.0;
        let mut total = 0.0;
        for (s, &c) in counts[na].iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            total += c;
            let u_s = (s as f64 - offset) / 2.0;
            if (u_s - mu).abs() >= observed - 1e-9 {
                extreme += c;
            }
        }
        extreme / total
    } else {
        let nf = n as f64;
        let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let diff = ((u - mu).abs() - 0.5).max(0.0);
            two_sided_normal(diff / var.sqrt())
        }
    };
    Ok(RankTest {
        statistic: u,
        p_value,
    })
}

/// Wilcoxon signed-rank test on paired samples. The statistic is W+ (sum of
/// ranks of positive differences). Zero differences are dropped; with no
/// non-zero differences the test reports p = 1.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<RankTest> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(RankTest {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let p_value = if n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let total: f64 = counts.iter().sum();
        let observed = (w_plus - mu).abs();
        let extreme: f64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as f64 / 2.0 - mu).abs() >= observed - 1e-9)
            .map(|(_, c)| c)
            .sum();
        extreme / total
    } else {
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let diff = ((w_plus - mu).abs() - 0.5).max(0.0);
            two_sided_normal(diff / var.sqrt())
        }
    };
    Ok(RankTest {
        statistic: w_plus,
        p_value: p_value.min(1.0),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman rank correlation (Pearson over midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&midranks(x), &midranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn percentile_examples() {
        assert_eq!(nearest_rank_percentile(&[0.1, 0.2, 0.3, 0.9], 75.0).unwrap(), 0.3);
        assert_eq!(nearest_rank_percentile(&[0.5], 1.0).unwrap(), 0.5);
        assert_eq!(nearest_rank_percentile(&[0.5], 99.0).unwrap(), 0.5);
        assert_eq!(nearest_rank_percentile(&[2.0; 7], 50.0).unwrap(), 2.0);
        assert!(nearest_rank_percentile(&[], 50.0).is_err());
    }

    #[test]
    fn mann_whitney_examples() {
        assert_eq!(mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap().statistic, 0.0);
        let same = [1.0, 2.0, 3.0];
        assert_eq!(mann_whitney_u(&same, &same).unwrap().statistic, 4.5);
        // a={1,3}, b={2,4}: only 3 > 2 wins.
        assert_eq!(mann_whitney_u(&[1.0, 3.0], &[2.0, 4.0]).unwrap().statistic, 1.0);
    }

    #[test]
    fn mann_whitney_exact_p_complete_separation() {
        // 4 vs 4, complete separation: 2 of C(8,4)=70 arrangements as extreme.
        let t = mann_whitney_u(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_abs_diff_eq!(t.p_value, 2.0 / 70.0, epsilon = 1e-12);
    }

    #[test]
    fn mann_whitney_normal_branch_is_sane() {
        let a: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let b: Vec<f64> = (10..25).map(|i| i as f64).collect();
        let t = mann_whitney_u(&a, &b).unwrap();
        assert!(t.p_value < 0.01);
        let t = mann_whitney_u(&a, &a).unwrap();
        assert!(t.p_value > 0.9);
    }

    #[test]
    fn wilcoxon_identical_is_non_significant() {
        let t = wilcoxon_signed_rank(&[3.0, 4.0, 5.0], &[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_exact_all_positive() {
        // 5 positive differences: only 2 of 32 sign patterns as extreme.
        let x = [2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.0, 1.0, 1.0, 1.0, 1.0];
        let t = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(t.statistic, 15.0);
        assert_abs_diff_eq!(t.p_value, 2.0 / 32.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [10.0, 20.0, 25.0, 100.0];
        assert_abs_diff_eq!(spearman(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
    }
}
