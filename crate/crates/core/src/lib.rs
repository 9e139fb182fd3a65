//! Pricing and revenue sharing for a secondary Wi-Fi bandwidth market.
//!
//! Users buy bandwidth from establishment or individual Wi-Fi providers
//! (WFPs). Prices form through dual subgradient dynamics on WFP capacity and
//! ISP links, and each sale's revenue is split between the WFP and the ISP by
//! a two-player Shapley settlement.
//!
//! Module map:
//!
//! * [`model`]: domain types and scenario validation.
//! * [`sharing`]: coalition revenue functions and the Shapley settlement.
//! * [`pricing`]: user utilities, best response and the price solvers.
//! * [`scenario`]: scenario configs, presets and the run modes.
//! * [`report`]: CSV and SVG output for time series.
//! * [`check`]: randomized property suites behind `wfpsim check`.
//! * [`exec`]: sequential or rayon-backed batch evaluation.

pub mod check;
pub mod error;
pub mod exec;
pub mod model;
pub mod pricing;
pub mod report;
pub mod scenario;
pub mod sharing;

pub use error::{MarketError, Result};
pub use exec::Execution;

/// Absolute tolerance for monetary and bandwidth comparisons.
pub const TOLERANCE: f64 = 1e-9;
