//! Forecasting: feature recipes, LAD boosted trees, EnbPI intervals and
//! scenario trees.

pub mod enbpi;
pub mod features;
pub mod forecaster;
pub mod gbt;
pub mod scenario;
pub mod solar;
