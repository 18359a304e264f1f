use alloc::string::String;
use alloc::vec::Vec;

use crate::grid::Cell;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid configuration {cells:?}: {reason}")]
    Configuration { cells: Vec<Cell>, reason: String },
    #[error("configuration of size {size} exceeds n_max = {n_max}")]
    LevelOverflow { size: usize, n_max: usize },
    #[error("n_max mismatch: {0} vs {1}")]
    NMaxMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("overlapping arguments: {0}")]
    Overlap(String),
    #[error("precondition {tag} violated: {detail}")]
    Precondition { tag: &'static str, detail: String },
    #[error("zero death energy at {0:?}")]
    ZeroDeathEnergy(Vec<Cell>),
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("birth envelope violated: acceptance {acceptance} > 1 at t = {t}")]
    EnvelopeViolated { acceptance: f64, t: f64 },
    #[error("rate audit drift {drift:e} exceeds tolerance")]
    RateDrift { drift: f64 },
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
