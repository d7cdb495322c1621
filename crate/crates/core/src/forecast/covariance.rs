//! Exponentially weighted covariance of transformed forecast errors.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default forgetting factor.
pub const DEFAULT_LAMBDA: f64 = 0.99;

/// Recursive estimate `Σ_t = λ Σ_{t-1} + (1 − λ) x xᵀ`, started at the
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTracker<T> {
    pub dim: usize,
    pub lambda: T,
    /// Row-major `dim × dim`.
    pub sigma: Vec<T>,
}

impl<T: Float> CovarianceTracker<T> {
    pub fn new(dim: usize, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero() && lambda < T::one()) {
            return Err(Error::Precondition("forgetting factor must lie in [0, 1)".into()));
        }
        let mut sigma = vec![T::zero(); dim * dim];
        for i in 0..dim {
            sigma[i * dim + i] = T::one();
        }
        Ok(CovarianceTracker { dim, lambda, sigma })
    }

    pub fn from_matrix(matrix: &[Vec<T>], lambda: T) -> Result<Self> {
        let mut t = Self::new(matrix.len(), lambda)?;
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != t.dim {
                return Err(Error::Precondition("covariance matrix must be square".into()));
            }
            t.sigma[i * t.dim..(i + 1) * t.dim].copy_from_slice(row);
        }
        Ok(t)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.sigma[i * self.dim + j]
    }

    /// Leading `k × k` block (the marginal covariance of the first `k` hours).
    pub fn leading_block(&self, k: usize) -> Vec<Vec<T>> {
        (0..k).map(|i| (0..k).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Folds one vector of transformed residuals into the estimate. Only the
    /// upper triangle is computed and mirrored, so symmetry holds exactly.
    pub fn update(&mut self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Precondition(format!(
                "update vector has {} entries, tracker dimension is {}",
                x.len(),
                self.dim
            )));
        }
        let keep = self.lambda;
        let fresh = T::one() - self.lambda;
        let n = self.dim;
        for i in 0..n {
            for j in i..n {
                let v = keep * self.sigma[i * n + j] + fresh * x[i] * x[j];
                self.sigma[i * n + j] = v;
                self.sigma[j * n + i] = v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_update_by_substitution() {
        let mut t = CovarianceTracker::new(2, 0.9).unwrap();
        t.update(&[1.0, 0.0]).unwrap();
        assert_eq!(t.leading_block(2), vec![vec![1.0, 0.0], vec![0.0, 0.9]]);
    }

    #[test]
    fn zero_lambda_forgets_everything() {
        let mut t = CovarianceTracker::from_matrix(&[vec![5.0, 1.0], vec![1.0, 3.0]], 0.0).unwrap();
        t.update(&[2.0, -1.0]).unwrap();
        assert_eq!(t.leading_block(2), vec![vec![4.0, -2.0], vec![-2.0, 1.0]]);
    }

    #[test]
    fn lambda_of_one_is_rejected() {
        assert!(CovarianceTracker::<f64>::new(3, 1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut t = CovarianceTracker::new(3, 0.5).unwrap();
        assert!(t.update(&[1.0, 2.0]).is_err());
    }
}
