//! Probabilistic price forecasting: point model, error distributions,
//! error dependence and scenario sampling.

pub mod arimax;
pub mod covariance;
pub(crate) mod linalg;
pub mod pit;
pub mod quantile;
pub mod scenarios;
pub mod pipeline;
