use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Rank-truncated SVD with a fixed sign convention: the largest-magnitude
/// entry of every left singular vector is positive.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// m x r
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// r x n
    pub v_t: DMatrix<f64>,
    /// Requested dimensionality; may exceed the available rank.
    pub dim: usize,
}

impl TruncatedSvd {
    pub fn fit(matrix: &DMatrix<f64>, dim: usize) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        if matrix.is_empty() {
            return Err(Error::Empty("matrix"));
        }
        let max_rank = matrix.nrows().min(matrix.ncols());
        let rank = if dim > max_rank {
            log::warn!("requested d={dim} exceeds min(dims)={max_rank}; clamping and zero-padding");
            max_rank
        } else {
            dim
        };
        let svd = matrix.clone().svd(true, true);
        let u_full = svd.u.expect("u requested");
        let vt_full = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        order.truncate(rank);

        let mut u = DMatrix::zeros(matrix.nrows(), rank);
        let mut v_t = DMatrix::zeros(rank, matrix.ncols());
        let mut singular_values = Vec::with_capacity(rank);
        for (k, &src) in order.iter().enumerate() {
            let col = u_full.column(src);
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            u.set_column(k, &(col * sign));
            v_t.set_row(k, &(vt_full.row(src) * sign));
            singular_values.push(svd.singular_values[src]);
        }
        Ok(TruncatedSvd {
            u,
            singular_values,
            v_t,
            dim,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Row factor scaled by singular values, padded with zeros to `dim`.
    pub fn row_embedding(&self, row: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..self.rank())
            .map(|k| (self.u[(row, k)] * self.singular_values[k]) as f32)
            .collect();
        v.resize(self.dim, 0.0);
        v
    }

    pub fn row_embeddings(&self, names: &[String]) -> HashMap<String, Vec<f32>> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), self.row_embedding(i)))
            .collect()
    }

    /// Reconstruction from the leading `d` components.
    pub fn reconstruct(&self, d: usize) -> DMatrix<f64> {
        let d = d.min(self.rank());
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for k in 0..d {
            out += self.u.column(k) * self.v_t.row(k) * self.singular_values[k];
        }
        out
    }

    pub fn reconstruction_error(&self, original: &DMatrix<f64>, d: usize) -> f64 {
        (original - self.reconstruct(d)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_is_exact() {
        let a = DMatrix::from_fn(4, 3, |i, j| ((i + 1) * (j + 2)) as f64);
        let svd = TruncatedSvd::fit(&a, 1).unwrap();
        assert!(svd.reconstruction_error(&a, 1) < 1e-9);
    }

    #[test]
    fn identity_full_rank() {
        let a = DMatrix::<f64>::identity(3, 3);
        let svd = TruncatedSvd::fit(&a, 3).unwrap();
        assert!(svd.reconstruction_error(&a, 3) < 1e-12);
    }

    #[test]
    fn error_is_monotone_in_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let svd = TruncatedSvd::fit(&a, 5).unwrap();
        let errs: Vec<f64> = (0..=5).map(|d| svd.reconstruction_error(&a, d)).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    }

    #[test]
    fn clamps_and_pads() {
        let a = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let svd = TruncatedSvd::fit(&a, 100).unwrap();
        assert_eq!(svd.rank(), 2);
        assert_eq!(svd.row_embedding(0).len(), 100);
    }

    #[test]
    fn sign_convention() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -1.0]);
        let svd = TruncatedSvd::fit(&a, 2).unwrap();
        for k in 0..2 {
            let col = svd.u.column(k);
            let pivot = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
        assert!(svd.reconstruction_error(&a, 2) < 1e-12);
    }
}
