//! Look-ahead commitment with pumped-storage hydro: price scenario
//! generation, stochastic and robust window models, rolling simulation and
//! evaluation.
//!
//! Model builders are generic over [`scalar::Scalar`]. The aliases below fix
//! the scalar for the two uses in this crate: `f64` for solving and exact
//! rationals for coefficient inspection.

pub mod accounting;
pub mod error;
pub mod forecast;
pub mod io;
pub mod lac_models;
pub mod milp;
pub mod psh_model;
pub mod rolling;
pub mod scalar;
pub mod synth;
pub mod system;

pub use error::{Error, Result};
pub use lac_models::ModelVariant;
pub use scalar::{Exact, Scalar};

pub type SystemF = system::System<f64>;
pub type SystemExact = system::System<Exact>;
pub type MarketDayF = system::MarketDay<f64>;
pub type ScenarioSetF = system::PriceScenarioSet<f64>;
pub type ScenarioSetExact = system::PriceScenarioSet<Exact>;
pub type ModelF = milp::MilpModel<f64>;
pub type ModelExact = milp::MilpModel<Exact>;
pub type LacModelF = lac_models::LacModel<f64>;
pub type LacModelExact = lac_models::LacModel<Exact>;
