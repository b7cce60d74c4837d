//! Edge-service monetization in a mobile Internet ecosystem.
//!
//! - [`model`]: utilities, costs, slot realizations, data plans and payoffs.
//! - [`offline`]: hindsight-optimal offloading with a known month of slots.
//! - [`online`]: causal shadow-price strategy and its regret diagnostics.
//! - [`pricing`]: adversarial-bandit edge pricing over a geometric price grid.
//! - [`ecosystem`]: population simulation and ISP / CP / ESP revenue accounting.
//! - [`experiment`]: config-driven sweeps, CSV output and acceptance checks.

pub mod ecosystem;
pub mod error;
pub mod experiment;
pub mod model;
pub mod offline;
pub mod online;
pub mod pricing;
pub mod verify;

pub use error::{Error, Result};
