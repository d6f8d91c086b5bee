use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal-component projection fit on a training matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Row `k` is the `k`-th principal axis. Fewer than `dim` rows when the
    /// data has lower rank; missing coordinates project to zero.
    pub components: Vec<Vec<f64>>,
    pub dim: usize,
}

impl Pca {
    pub fn fit(rows: &[Vec<f32>], dim: usize) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("PCA training rows"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged PCA input".into()));
        }
        let n = rows.len();
        let mut mean = vec![0f64; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += *x as f64 / n as f64);
        }
        let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64 - mean[j]);
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::InvalidInput("PCA decomposition failed".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let tol = 1e-5 * svd.singular_values.max();
        let components = order
            .into_iter()
            .filter(|&k| svd.singular_values[k] > tol)
            .take(dim)
            .map(|k| {
                let mut axis: Vec<f64> = v_t.row(k).iter().copied().collect();
                let lead = axis.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
                if lead < 0.0 {
                    axis.iter_mut().for_each(|x| *x = -*x);
                }
                axis
            })
            .collect();
        Ok(Pca { mean, components, dim })
    }

    pub fn transform(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.mean.len() {
            return Err(Error::InvalidInput(format!("PCA expects {} inputs, got {}", self.mean.len(), x.len())));
        }
        let mut out = vec![0f32; self.dim];
        for (o, axis) in out.iter_mut().zip(&self.components) {
            *o = axis.iter().zip(x).zip(&self.mean).map(|((a, v), m)| a * (*v as f64 - m)).sum::<f64>() as f32;
        }
        Ok(out)
    }

    pub fn inverse(&self, z: &[f32]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (zk, axis) in z.iter().zip(&self.components) {
            x.iter_mut().zip(axis).for_each(|(xi, a)| *xi += *zk as f64 * a);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_rank_data_reconstructs() {
        // 100 points in a 3-dimensional subspace of R^8 spanned by orthonormal axes
        let basis = [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.6, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..100)
            .map(|_| {
                let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (0..8).map(|j| (0..3).map(|k| c[k] * basis[k][j]).sum::<f64>() as f32 + 0.5).collect()
            })
            .collect();
        let pca = Pca::fit(&rows, 5).unwrap();
        assert_eq!(pca.components.len(), 3);
        for r in &rows {
            let z = pca.transform(r).unwrap();
            assert_eq!(z.len(), 5);
            assert_eq!(&z[3..], &[0.0, 0.0]);
            for (a, b) in pca.inverse(&z).iter().zip(r) {
                assert!((a - *b as f64).abs() < 1e-4);
            }
        }
        let two = Pca::fit(&rows, 2).unwrap();
        let err = |p: &Pca| -> f64 {
            rows.iter()
                .map(|r| p.inverse(&p.transform(r).unwrap()).iter().zip(r).map(|(a, b)| (a - *b as f64).powi(2)).sum::<f64>())
                .sum()
        };
        assert!(err(&two) > err(&pca));
    }
}
