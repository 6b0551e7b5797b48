//! News-driven trading research toolkit: market and announcement loading,
//! rule-based and learned strategies, a daily backtester, statistics and a
//! synthetic data generator.

pub mod analytics;
pub mod learning;
pub mod marketdata;
pub mod newsfeed;
pub mod rng;
pub mod simulator;
pub mod strategies;
pub mod synth;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
