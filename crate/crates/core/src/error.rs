use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("maximum principle violated for species {species} at cell {cell}: value {value:.15e} outside [{lower:.15e}, {upper:.15e}]")]
    MaxPrincipleViolation {
        species: usize,
        cell: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("nonpositive concentration {value:.3e} for species {species} at cell {cell}")]
    NonpositiveConcentration {
        species: usize,
        cell: usize,
        value: f64,
    },

    #[error("time step {dt:.3e} rejected ({reason}); retry with dt <= {limit:.3e}")]
    RetryWithSmallerDt {
        dt: f64,
        limit: f64,
        reason: &'static str,
    },

    #[error("damped Newton stalled at residual {residual:.3e} after {iterations} iterations")]
    NewtonStall { iterations: usize, residual: f64 },

    #[error("Gummel iteration diverged after {iterations} sweeps (residual {residual:.3e})")]
    GummelDivergence { iterations: usize, residual: f64 },

    #[error("tangent bundle rank deficient: mode {index} collapsed")]
    RankDeficient { index: usize },

    #[error("states are identical; difference energy is zero")]
    IdenticalStates,

    #[error("trajectory does not cover the window [{start}, {end}]")]
    InsufficientWindow { start: f64, end: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error in {path:?}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0}")]
    PartialFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
