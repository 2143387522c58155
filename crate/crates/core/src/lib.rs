//! Two-step conditional quantile (value-at-risk) estimation that combines daily
//! returns with intraday realized measures.
//!
//! The first step fits a realized-GARCH volatility recursion by quasi-maximum
//! likelihood with realized variance plus squared overnight return as the
//! variance proxy. The second step is an exact linear quantile regression on the
//! filtered volatility, a realized measure and the overnight return. Competitor
//! forecasters, a simulation harness and VaR backtests are included.
//!
//! Estimators are generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the scalar to `f64`.

pub mod backtest;
pub mod competitors;
pub mod error;
pub mod first_step;
pub mod market_data;
pub mod models;
pub mod num;
pub mod optim;
pub mod quantile_regression;
pub mod realized;
pub mod rolling;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use num::Scalar;

pub type IntradayDay = market_data::IntradayDay<f64>;
pub type DailyObservation = market_data::DailyObservation<f64>;
pub type GarchParams = first_step::GarchParams<f64>;
pub type ParamBox = first_step::ParamBox<f64>;
pub type VolFilterState = first_step::VolFilterState<f64>;
pub type QmleFit = first_step::QmleFit<f64>;
pub type QuantileCoeffs = quantile_regression::QuantileCoeffs<f64>;
pub type DesignRow = quantile_regression::DesignRow<f64>;
pub type CaviarParams = competitors::CaviarParams<f64>;
pub type RealizedQuantileSpec = realized::RealizedQuantileSpec<f64>;

pub type IntradayDay32 = market_data::IntradayDay<f32>;
pub type DailyObservation32 = market_data::DailyObservation<f32>;
pub type GarchParams32 = first_step::GarchParams<f32>;
pub type QuantileCoeffs32 = quantile_regression::QuantileCoeffs<f32>;
