//! Forecasting, scenario generation and model predictive control for a
//! battery-buffered EV charging hub.
//!
//! The crate is organised bottom-up:
//!
//! - [`timeseries`]: the quarter-hour grid, unit-tagged series and calendars.
//! - [`hub`]: battery loss model, EV demand aggregation and grid cost.
//! - [`solver`]: second-order cone programs and their solution.
//! - [`forecast`]: feature recipes, LAD boosted trees, EnbPI intervals and
//!   scenario trees.
//! - [`mpc`]: the four controller variants compiled to conic programs.
//! - [`sim`]: the closed-loop plant and episode runner.
//! - [`metrics`]: forecast accuracy/coverage and controller tables.
//! - [`data`]: CSV ingestion, synthetic data and run configuration.
//!
//! Data-parallel work (bootstrap ensembles, forecast batches, independent
//! episodes) goes through [`exec::Execution`], which falls back to plain
//! iterators when the `parallel` feature is disabled.

pub mod data;
pub mod error;
pub mod exec;
pub mod forecast;
pub mod hub;
pub mod metrics;
pub mod mpc;
pub mod pipeline;
pub mod sim;
pub mod solver;
pub mod timeseries;

pub use error::{Error, Result};
