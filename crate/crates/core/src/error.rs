use thiserror::Error;

/// Errors raised by the model, solvers, pricing policy and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("decision violates 0 <= z <= x <= 1 (x = {x}, z = {z})")]
    InvalidDecision { x: f64, z: f64 },

    #[error("length mismatch: {slots} slots but {decisions} decisions")]
    LengthMismatch { slots: usize, decisions: usize },

    #[error("slot list is empty")]
    EmptySlots,

    #[error("no solution region matched (lambda = {lambda})")]
    RegionGap { lambda: f64 },

    #[error("price grid is empty: cap {price_cap} is below p_min * (1 + epsilon) = {first}")]
    EmptyGrid { price_cap: f64, first: f64 },

    #[error("instance too large for the brute-force oracle: {0}")]
    InstanceTooLarge(String),

    #[error("negative revenue {revenue} reported for candidate {candidate}")]
    NegativeRevenue { candidate: usize, revenue: f64 },

    #[error("candidate index {index} out of range (grid has {len} candidates)")]
    CandidateOutOfRange { index: usize, len: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure at seed {seed}: {detail}")]
    Numeric { seed: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
