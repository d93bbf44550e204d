use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid setup: {0}")]
    InvalidSetup(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("boundary path leaves [{lower}, {upper}] at node {index} (R = {value})")]
    PathOutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("inconsistent field: {0}")]
    Inconsistent(String),

    #[error("point at radius {radius} lies outside the domain of radius {limit}")]
    OutOfDomain { radius: f64, limit: f64 },

    #[error("field role mismatch: expected {expected}, found {found}")]
    Role {
        expected: &'static str,
        found: &'static str,
    },

    #[error("Dirichlet condition violated at time level {level} (endpoint values {left}, {right})")]
    Dirichlet { level: usize, left: f64, right: f64 },

    #[error("weights degenerate at t = {t}: require 0 < t < {horizon}")]
    Degenerate { t: f64, horizon: f64 },

    #[error("non-finite solution at step {step}; try N = {suggested_n}, M = {suggested_m}")]
    Instability {
        step: usize,
        suggested_n: usize,
        suggested_m: usize,
    },

    #[error("conjugate gradient did not converge in {iterations} iterations (last residual {})",
        residual_history.last().copied().unwrap_or(f64::NAN))]
    CgNotConverged {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("operator is numerically singular: {0}")]
    Singular(String),

    #[error("iteration stagnated: {0}")]
    Stagnation(String),

    #[error("problem size {size} exceeds the dense cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("constraint breach: {0}")]
    ConstraintBreach(String),

    #[error("fixed-point iteration did not converge after {iterations} outer iterations (last difference {last_difference})")]
    FixedPointNotConverged {
        iterations: usize,
        last_difference: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
