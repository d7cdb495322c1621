//! Non-parametric marginal distributions described by a grid of quantiles.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail extension beyond the outermost quantiles is capped at this many
/// interquartile ranges.
pub const TAIL_IQR_CAP: f64 = 5.0;

/// Default level grid: 0.05, 0.10, …, 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Quantile estimates `values[i]` at probability `levels[i]`.
///
/// The distribution function between knots is piecewise linear. Below the
/// first and above the last level it continues with the slope of the
/// outermost segment until probability 0 or 1, but never further than
/// [`TAIL_IQR_CAP`] interquartile ranges from the outer quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve<T> {
    pub levels: Vec<T>,
    pub values: Vec<T>,
}

pub(crate) fn check_levels<T: Float>(levels: &[T]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Precondition("at least one quantile level is required".into()));
    }
    if levels.iter().any(|a| *a <= T::zero() || *a >= T::one()) {
        return Err(Error::Precondition("levels must lie in (0, 1)".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("levels must be strictly increasing".into()));
    }
    Ok(())
}

impl<T: Float> QuantileCurve<T> {
    /// Builds a curve; crossing estimates are repaired by rearrangement
    /// (sorting the values), which keeps the set of values intact.
    pub fn new(levels: Vec<T>, mut values: Vec<T>) -> Result<Self> {
        check_levels(&levels)?;
        if levels.len() != values.len() {
            return Err(Error::Precondition("one value per level is required".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite quantiles"));
        Ok(QuantileCurve { levels, values })
    }

    /// The curve of `x + offset`.
    pub fn shifted(&self, offset: T) -> Self {
        QuantileCurve {
            levels: self.levels.clone(),
            values: self.values.iter().map(|v| *v + offset).collect(),
        }
    }

    /// Knots of the piecewise-linear distribution function, including the
    /// tail end points at probability 0 and 1.
    fn knots(&self) -> Vec<(T, T)> {
        let m = self.levels.len();
        let cap = T::from(TAIL_IQR_CAP).unwrap() * self.iqr();
        let (lo_slope, hi_slope) = if m >= 2 {
            (
                (self.values[1] - self.values[0]) / (self.levels[1] - self.levels[0]),
                (self.values[m - 1] - self.values[m - 2]) / (self.levels[m - 1] - self.levels[m - 2]),
            )
        } else {
            (T::zero(), T::zero())
        };
        let lower = self.values[0] - (lo_slope * self.levels[0]).min(cap);
        let upper = self.values[m - 1] + (hi_slope * (T::one() - self.levels[m - 1])).min(cap);
        let mut k = Vec::with_capacity(m + 2);
        k.push((lower, T::zero()));
        k.extend(self.values.iter().copied().zip(self.levels.iter().copied()));
        k.push((upper, T::one()));
        k
    }

    /// Quantile function by linear interpolation; `alpha` is clamped to [0, 1].
    pub fn quantile(&self, alpha: T) -> T {
        let a = alpha.max(T::zero()).min(T::one());
        let k = self.knots();
        for w in k.windows(2) {
            let ((x0, a0), (x1, a1)) = (w[0], w[1]);
            if a <= a1 {
                if a1 == a0 {
                    return x0;
                }
                return x0 + (x1 - x0) * (a - a0) / (a1 - a0);
            }
        }
        k[k.len() - 1].0
    }

    /// Distribution function. On a flat run of equal quantiles the midpoint
    /// of the probability jump is returned.
    pub fn cdf(&self, x: T) -> T {
        let k = self.knots();
        if x < k[0].0 {
            return T::zero();
        }
        if x > k[k.len() - 1].0 {
            return T::one();
        }
        let first = k.iter().position(|(v, _)| *v >= x).unwrap();
        if k[first].0 == x {
            let last = k.iter().rposition(|(v, _)| *v == x).unwrap();
            let two = T::one() + T::one();
            return (k[first].1 + k[last].1) / two;
        }
        let ((x0, a0), (x1, a1)) = (k[first - 1], k[first]);
        a0 + (a1 - a0) * (x - x0) / (x1 - x0)
    }

    /// Interquartile range read off the curve.
    pub fn iqr(&self) -> T {
        let q = |a: f64| interp(&self.levels, &self.values, T::from(a).unwrap());
        q(0.75) - q(0.25)
    }
}

/// Interpolation on the inner knots only, flat beyond them.
fn interp<T: Float>(levels: &[T], values: &[T], a: T) -> T {
    if a <= levels[0] {
        return values[0];
    }
    let m = levels.len();
    if a >= levels[m - 1] {
        return values[m - 1];
    }
    let i = levels.iter().position(|l| *l >= a).unwrap();
    let (a0, a1) = (levels[i - 1], levels[i]);
    values[i - 1] + (values[i] - values[i - 1]) * (a - a0) / (a1 - a0)
}

/// Pinball (check) loss of estimate `q` at level `alpha`.
pub fn pinball_loss<T: Float>(sample: &[T], q: T, alpha: T) -> T {
    sample.iter().fold(T::zero(), |acc, &y| {
        let u = y - q;
        acc + if u >= T::zero() { alpha * u } else { (alpha - T::one()) * u }
    })
}

/// Minimiser of the pinball loss over an already sorted sample. When the
/// minimiser is an interval, its midpoint is returned.
pub fn sample_quantile<T: Float>(sorted: &[T], alpha: T) -> T {
    let n = sorted.len();
    let na = alpha * T::from(n).unwrap();
    let k = na.ceil().to_usize().unwrap().clamp(1, n);
    if na == na.floor() && k < n {
        let two = T::one() + T::one();
        (sorted[k - 1] + sorted[k]) / two
    } else {
        sorted[k - 1]
    }
}

/// Minimum number of observations per look-ahead hour.
pub const MIN_OBSERVATIONS: usize = 50;

/// One curve per look-ahead hour from the historical observations of that
/// hour (`samples[k]` holds the history for hour `k + 1`).
pub fn fit_quantiles<T: Float>(samples: &[Vec<T>], levels: &[T]) -> Result<Vec<QuantileCurve<T>>> {
    check_levels(levels)?;
    samples
        .iter()
        .enumerate()
        .map(|(k, sample)| {
            if sample.len() < MIN_OBSERVATIONS {
                return Err(Error::Precondition(format!(
                    "look-ahead hour {} has {} observations, at least {MIN_OBSERVATIONS} are required",
                    k + 1,
                    sample.len()
                )));
            }
            let mut sorted = sample.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite observations"));
            let values = levels.iter().map(|a| sample_quantile(&sorted, *a)).collect();
            QuantileCurve::new(levels.to_vec(), values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_of_uniform_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sample: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..100.0)).collect();
        let curves = fit_quantiles(&[sample.clone()], &[0.5]).unwrap();
        let q = curves[0].values[0];
        // Oracle: brute-force pinball minimisation over the sample points.
        let best = sample
            .iter()
            .copied()
            .min_by(|a, b| pinball_loss(&sample, *a, 0.5).partial_cmp(&pinball_loss(&sample, *b, 0.5)).unwrap())
            .unwrap();
        assert!((pinball_loss(&sample, q, 0.5) - pinball_loss(&sample, best, 0.5)).abs() < 1e-9);
        assert!((45.0..=55.0).contains(&q), "median {q}");
    }

    #[test]
    fn constant_history_gives_constant_curve() {
        let curves = fit_quantiles(&[vec![7.5; 60]], &default_levels()).unwrap();
        assert!(curves[0].values.iter().all(|v| *v == 7.5));
        assert_eq!(curves[0].cdf(7.5), 0.5);
        assert_eq!(curves[0].quantile(0.01), 7.5);
    }

    #[test]
    fn unsorted_levels_are_rejected() {
        let err = fit_quantiles(&[vec![1.0; 60]], &[0.9, 0.1]).unwrap_err();
        assert!(err.to_string().contains("levels must be strictly increasing"));
    }

    #[test]
    fn too_few_observations_are_rejected() {
        assert!(fit_quantiles(&[vec![1.0; 49]], &[0.5]).is_err());
    }

    #[test]
    fn crossing_values_are_rearranged() {
        let c = QuantileCurve::new(vec![0.1, 0.5, 0.9], vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn tails_are_capped_by_iqr() {
        // Very steep outer segment, narrow centre.
        let c = QuantileCurve::new(vec![0.05, 0.25, 0.75, 0.95], vec![-1000.0, -1.0, 1.0, 1000.0]).unwrap();
        assert_eq!(c.iqr(), 2.0);
        assert_eq!(c.quantile(0.0), -1010.0);
        assert_eq!(c.quantile(1.0), 1010.0);
    }

    #[test]
    fn tails_extend_with_outer_slope() {
        let c = QuantileCurve::new(vec![0.25, 0.5, 0.75], vec![-1.0, 0.0, 1.0]).unwrap();
        assert!((c.quantile(0.0) + 2.0).abs() < 1e-12);
        assert!((c.cdf(-1.5) - 0.125).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(vals in proptest::collection::vec(-100.0f64..100.0, 5), a in 0.01f64..0.99) {
            let c = QuantileCurve::new(vec![0.1, 0.3, 0.5, 0.7, 0.9], vals).unwrap();
            let x = c.quantile(a);
            let distinct = c.values.windows(2).all(|w| w[1] - w[0] > 1e-6);
            if distinct {
                prop_assert!((c.cdf(x) - a).abs() < 1e-9);
            }
        }

        #[test]
        fn quantile_is_monotone(vals in proptest::collection::vec(-100.0f64..100.0, 4), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let c = QuantileCurve::new(vec![0.2, 0.4, 0.6, 0.8], vals).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.quantile(lo) <= c.quantile(hi));
        }
    }
}
