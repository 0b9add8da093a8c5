//! Building heat-balance simulation and reconstruction of room occupancy
//! ("mobility maps") from noisy temperature readings.
//!
//! The usual flow is [`simulator::simulate`] → [`simulator::add_sensor_noise`]
//! → [`estimator::assemble`] / [`estimator::solve`] →
//! [`metrics::to_mobility_map`] → [`metrics::score`]. [`pipeline`] bundles
//! that flow and [`sweep`] repeats it over a parameter grid.

pub mod config;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod simulator;
pub mod sweep;
pub mod units;

pub use error::{Error, ErrorKind, Result};
