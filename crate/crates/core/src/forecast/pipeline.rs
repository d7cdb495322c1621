//! Training and day-time use of the full forecasting chain for every PSH
//! price node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::arimax::{fit_arimax, ArimaOrder, ArimaxFilter, ArimaxSpec};
use super::covariance::{CovarianceTracker, DEFAULT_LAMBDA};
use super::pit::{pit_transform, probit};
use super::quantile::{default_levels, fit_quantiles, QuantileCurve};
use super::scenarios::{generate_scenarios, NodeForecast};
use crate::error::{Error, Result};
use crate::io::PriceHistory;
use crate::system::{MarketDay, PriceScenarioSet};

/// Minimum training length in days.
pub const MIN_HISTORY_DAYS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub levels: Vec<f64>,
    pub lambda: f64,
    pub scenarios: usize,
    pub seed: u64,
    /// Look-ahead hours covered by error curves and covariance.
    pub horizon: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            p: 1,
            d: 0,
            q: 1,
            levels: default_levels(),
            lambda: DEFAULT_LAMBDA,
            scenarios: 50,
            seed: 7,
            horizon: 24,
        }
    }
}

impl ForecastConfig {
    pub fn order(&self) -> ArimaOrder {
        ArimaOrder {
            p: self.p,
            d: self.d,
            q: self.q,
        }
    }
}

/// Everything fitted for one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeModel {
    pub spec: ArimaxSpec<f64>,
    /// Forecast error curves, index `k` for `k + 1` hours ahead.
    pub residual_curves: Vec<QuantileCurve<f64>>,
    pub tracker: CovarianceTracker<f64>,
}

/// Fitted forecaster together with the history it was trained on.
#[derive(Debug, Clone)]
pub struct ForecastPipeline {
    pub config: ForecastConfig,
    pub nodes: BTreeMap<String, NodeModel>,
    pub history: PriceHistory,
}

/// Forecast errors at every origin of a history: `out[k]` holds the
/// `k + 1`-hour-ahead errors in origin order.
fn backtest_errors(spec: &ArimaxSpec<f64>, y: &[f64], x: &[f64], horizon: usize, warmup: usize) -> Result<Vec<Vec<f64>>> {
    let mut errors = vec![Vec::new(); horizon];
    let mut filter = ArimaxFilter::over(spec, &y[..warmup], &[&x[..warmup]]);
    for origin in warmup..=y.len() - horizon {
        let fc = filter.forecast(&[&x[origin..origin + horizon]], horizon)?;
        for (k, f) in fc.iter().enumerate() {
            errors[k].push(y[origin + k] - f);
        }
        filter.push(y[origin], &[x[origin]]);
    }
    Ok(errors)
}

impl ForecastPipeline {
    /// Fits every node found in `history`.
    pub fn train(history: &PriceHistory, config: &ForecastConfig) -> Result<Self> {
        let need = MIN_HISTORY_DAYS * 24;
        if history.len() < need {
            return Err(Error::Precondition(format!(
                "forecast training needs at least {MIN_HISTORY_DAYS} days ({need} hours) of history, got {} hours",
                history.len()
            )));
        }
        if config.horizon == 0 || config.scenarios == 0 {
            return Err(Error::config("forecast horizon and scenario count must be positive"));
        }
        let mut nodes = BTreeMap::new();
        for (node, y) in &history.rt {
            let x = history
                .da
                .get(node)
                .ok_or_else(|| Error::config(format!("history lacks DA prices for node {node}")))?;
            let spec = fit_arimax(y, &[x], config.order())?;
            let warmup = (config.p + config.d + config.q + 1).max(24);
            let errors = backtest_errors(&spec, y, x, config.horizon, warmup)?;
            let curves = fit_quantiles(&errors, &config.levels)?;
            let mut tracker = CovarianceTracker::new(config.horizon, config.lambda)?;
            let origins = errors[0].len();
            for o in 0..origins {
                let z: Vec<f64> = (0..config.horizon)
                    .map(|k| probit(pit_transform(errors[k][o], &curves[k])))
                    .collect::<Result<_>>()?;
                tracker.update(&z)?;
            }
            nodes.insert(
                node.clone(),
                NodeModel {
                    spec,
                    residual_curves: curves,
                    tracker,
                },
            );
        }
        Ok(ForecastPipeline {
            config: config.clone(),
            nodes,
            history: history.clone(),
        })
    }

    /// Forecaster for one operating day that follows the training history.
    pub fn for_day<'a>(&'a self, day: &'a MarketDay<f64>, nodes: &[String]) -> Result<DayForecaster<'a>> {
        let mut filters = Vec::new();
        for n in nodes {
            let model = self
                .nodes
                .get(n)
                .ok_or_else(|| Error::config(format!("no forecast model for node {n}")))?;
            let da = day
                .da_lmp
                .get(n)
                .ok_or_else(|| Error::config(format!("day {} has no DA prices for node {n}", day.label)))?;
            let rt = day
                .rt_lmp_actual
                .get(n)
                .ok_or_else(|| Error::config(format!("day {} has no RT prices for node {n}", day.label)))?;
            let filter = ArimaxFilter::over(&model.spec, &self.history.rt[n], &[&self.history.da[n]]);
            filters.push((n.clone(), model, filter, da.as_slice(), rt.as_slice()));
        }
        Ok(DayForecaster {
            pipeline: self,
            hours: day.net_load.len(),
            filters,
        })
    }
}

type NodeState<'a> = (String, &'a NodeModel, ArimaxFilter<'a, f64>, &'a [f64], &'a [f64]);

/// Produces forecasts for a day at any origin hour, using actual prices only
/// up to that origin.
pub struct DayForecaster<'a> {
    pipeline: &'a ForecastPipeline,
    hours: usize,
    filters: Vec<NodeState<'a>>,
}

impl<'a> DayForecaster<'a> {
    pub fn hours(&self) -> usize {
        self.hours
    }

    /// Point forecasts per node for hours `origin + 1 ..= T`.
    pub fn point(&self, origin: usize) -> Result<Vec<Vec<f64>>> {
        let horizon = self.hours - origin;
        self.filters
            .iter()
            .map(|(_, _, base, da, rt)| {
                let mut f = base.clone();
                for h in 0..origin {
                    f.push(rt[h], &[da[h]]);
                }
                f.forecast(&[&da[origin..]], horizon)
            })
            .collect()
    }

    /// The point forecast as a single-trajectory set.
    pub fn point_set(&self, origin: usize) -> Result<PriceScenarioSet<f64>> {
        Ok(PriceScenarioSet::single(
            origin,
            origin + 1,
            self.hours,
            self.node_names(),
            self.point(origin)?,
        ))
    }

    pub fn node_names(&self) -> Vec<String> {
        self.filters.iter().map(|f| f.0.clone()).collect()
    }

    /// `count` scenarios for hours `origin + 1 ..= T`. The stream seed mixes
    /// the configured seed with the origin so every hour draws afresh.
    pub fn scenarios(&self, origin: usize, count: usize) -> Result<PriceScenarioSet<f64>> {
        let points = self.point(origin)?;
        let horizon = self.hours - origin;
        if horizon > self.pipeline.config.horizon {
            return Err(Error::config(format!(
                "forecast horizon {} is shorter than the {horizon} hours requested",
                self.pipeline.config.horizon
            )));
        }
        let nodes: Vec<NodeForecast<'_, f64>> = self
            .filters
            .iter()
            .zip(&points)
            .map(|((name, model, ..), point)| NodeForecast {
                node: name,
                point_forecast: point,
                curves: &model.residual_curves,
                tracker: &model.tracker,
            })
            .collect();
        let seed = origin_seed(self.pipeline.config.seed, origin);
        generate_scenarios(&nodes, origin, count, seed)
    }
}

impl DayForecaster<'_> {
    /// PIT values of the day's actual prices under the forecast made at
    /// `origin`, over every node and lead.
    pub fn actual_pit(&self, origin: usize) -> Result<Vec<f64>> {
        let points = self.point(origin)?;
        let mut out = Vec::new();
        for ((_, model, _, _, rt), point) in self.filters.iter().zip(&points) {
            for (k, f) in point.iter().enumerate().take(model.residual_curves.len()) {
                out.push(pit_transform(rt[origin + k] - f, &model.residual_curves[k]));
            }
        }
        Ok(out)
    }
}

/// Deterministic per-origin seed.
pub fn origin_seed(seed: u64, origin: usize) -> u64 {
    seed ^ (origin as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Kolmogorov–Smirnov distance of a sample from U(0, 1).
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite PIT values"));
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, w)| {
        let hi = (i + 1) as f64 / n - w;
        let lo = w - i as f64 / n;
        d.max(hi).max(lo)
    })
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Share of actual prices inside the `[lo, hi]` empirical quantile
/// envelope of the scenario set, over every node and hour it covers.
pub fn envelope_coverage(set: &PriceScenarioSet<f64>, actual: &BTreeMap<String, Vec<f64>>, lo: f64, hi: f64) -> (usize, usize) {
    let mut inside = 0;
    let mut total = 0;
    for (n, node) in set.nodes.iter().enumerate() {
        let Some(series) = actual.get(node) else { continue };
        for h in set.first_hour..=set.last_hour {
            let mut v: Vec<f64> = set.prices.iter().map(|s| s[n][h - set.first_hour]).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = |a: f64| super::quantile::sample_quantile(&v, a);
            let y = series[h - 1];
            total += 1;
            if y >= q(lo) && y <= q(hi) {
                inside += 1;
            }
        }
    }
    (inside, total)
}
