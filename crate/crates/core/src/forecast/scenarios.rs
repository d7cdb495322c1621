//! Sampling of price trajectories that keep the inter-hour dependence of
//! forecast errors.

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::covariance::CovarianceTracker;
use super::linalg::cholesky_psd;
use super::pit::inverse_probit;
use super::quantile::QuantileCurve;
use crate::error::{Error, Result};
use crate::system::PriceScenarioSet;

/// Forecast material of one price node.
#[derive(Debug, Clone, Copy)]
pub struct NodeForecast<'a, T> {
    pub node: &'a str,
    /// Point forecast for hours `origin + 1 ..`.
    pub point_forecast: &'a [T],
    /// Error distribution per look-ahead hour (index 0 is one hour ahead).
    pub curves: &'a [QuantileCurve<T>],
    pub tracker: &'a CovarianceTracker<T>,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-2;

/// Cholesky factor of the leading `k × k` covariance block, adding diagonal
/// jitter (relative to the mean variance) until it factors.
pub fn covariance_factor<T: Float>(tracker: &CovarianceTracker<T>, k: usize) -> Result<Vec<Vec<T>>> {
    let block = tracker.leading_block(k);
    let scale = if k == 0 {
        T::one()
    } else {
        (0..k).fold(T::zero(), |a, i| a + block[i][i]) / T::from(k).unwrap()
    };
    let tol = T::from(1e-12).unwrap() * scale.max(T::one());
    if let Some(l) = cholesky_psd(&block, tol) {
        return Ok(l);
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX {
        let mut b = block.clone();
        for (i, row) in b.iter_mut().enumerate() {
            row[i] = row[i] + T::from(jitter).unwrap() * scale;
        }
        if let Some(l) = cholesky_psd(&b, tol) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "covariance is not positive semi-definite even with jitter {JITTER_MAX:e}"
    )))
}

/// Random stream of scenario `index`: the same seed and index always give
/// the same standard-normal draws, whatever the scenario count.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws `count` equally weighted trajectories covering hours
/// `origin + 1 ..= origin + horizon`, where the horizon is the length of the
/// point forecasts.
///
/// Each scenario draws one standard-normal vector shared by all nodes. Per
/// node it is correlated with the node's covariance factor, mapped to
/// probabilities by the Gaussian distribution function and then to prices
/// through the hour's error quantile curve added to the point forecast.
pub fn generate_scenarios<T: Float>(
    nodes: &[NodeForecast<'_, T>],
    origin: usize,
    count: usize,
    seed: u64,
) -> Result<PriceScenarioSet<T>> {
    if count == 0 {
        return Err(Error::Precondition("scenario count must be positive".into()));
    }
    let horizon = nodes.first().map_or(0, |n| n.point_forecast.len());
    for n in nodes {
        if n.point_forecast.len() != horizon {
            return Err(Error::Precondition("all nodes must share one forecast horizon".into()));
        }
        if n.curves.len() < horizon || n.tracker.dim < horizon {
            return Err(Error::Precondition(format!(
                "node {} lacks error curves or covariance for {horizon} hours",
                n.node
            )));
        }
    }
    let factors: Vec<Vec<Vec<T>>> = nodes
        .iter()
        .map(|n| covariance_factor(n.tracker, horizon))
        .collect::<Result<_>>()?;

    let mut prices = Vec::with_capacity(count);
    for s in 0..count {
        let mut rng = scenario_rng(seed, s);
        let xi: Vec<T> = (0..horizon)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::from(v).unwrap()
            })
            .collect();
        let mut traj = Vec::with_capacity(nodes.len());
        for (n, l) in nodes.iter().zip(&factors) {
            let row: Vec<T> = (0..horizon)
                .map(|k| {
                    let z = (0..=k).fold(T::zero(), |a, j| a + l[k][j] * xi[j]);
                    n.point_forecast[k] + n.curves[k].quantile(inverse_probit(z))
                })
                .collect();
            traj.push(row);
        }
        prices.push(traj);
    }
    let w = T::one() / T::from(count).unwrap();
    Ok(PriceScenarioSet {
        forecast_origin: origin,
        first_hour: origin + 1,
        last_hour: origin + horizon,
        nodes: nodes.iter().map(|n| n.node.to_string()).collect(),
        prices,
        weights: vec![w; count],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::pit::probit;

    fn normal_curve(levels: &[f64]) -> QuantileCurve<f64> {
        QuantileCurve::new(levels.to_vec(), levels.iter().map(|a| probit(*a).unwrap()).collect()).unwrap()
    }

    #[test]
    fn single_scenario_is_reproducible() {
        let levels = crate::forecast::quantile::default_levels();
        let curves = vec![normal_curve(&levels); 3];
        let tracker = CovarianceTracker::new(3, 0.9).unwrap();
        let point = [10.0, 20.0, 30.0];
        let nodes = [NodeForecast { node: "a", point_forecast: &point, curves: &curves, tracker: &tracker }];
        let a = generate_scenarios(&nodes, 5, 1, 42).unwrap();
        let b = generate_scenarios(&nodes, 5, 1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights, vec![1.0]);
        assert_eq!((a.first_hour, a.last_hour), (6, 8));
        let c = generate_scenarios(&nodes, 5, 1, 43).unwrap();
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn rank_one_covariance_shares_one_z_score() {
        let levels: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let curves = vec![normal_curve(&levels); 4];
        let tracker = CovarianceTracker::from_matrix(&vec![vec![1.0; 4]; 4], 0.9).unwrap();
        let point = [0.0; 4];
        let nodes = [NodeForecast { node: "a", point_forecast: &point, curves: &curves, tracker: &tracker }];
        let set = generate_scenarios(&nodes, 0, 20, 3).unwrap();
        for s in &set.prices {
            let row = &s[0];
            assert!(row.iter().all(|v| (v - row[0]).abs() < 1e-12), "{row:?}");
        }
    }

    #[test]
    fn larger_sets_extend_smaller_ones() {
        let levels = crate::forecast::quantile::default_levels();
        let curves = vec![normal_curve(&levels); 2];
        let tracker = CovarianceTracker::new(2, 0.9).unwrap();
        let point = [1.0, 2.0];
        let nodes = [NodeForecast { node: "a", point_forecast: &point, curves: &curves, tracker: &tracker }];
        let small = generate_scenarios(&nodes, 0, 5, 9).unwrap();
        let big = generate_scenarios(&nodes, 0, 8, 9).unwrap();
        assert_eq!(&big.prices[..5], &small.prices[..]);
        let total: f64 = big.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_covariance_fails() {
        let tracker = CovarianceTracker::from_matrix(&[vec![1.0, 5.0], vec![5.0, 1.0]], 0.5).unwrap();
        assert!(matches!(covariance_factor(&tracker, 2), Err(Error::Numerical(_))));
    }
}
