//! Solver adapters: anything that turns a prompt plus an asset into a
//! textual answer.

mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpTemplateAdapter, SolverConfig};
pub use mock::{ConstantSolver, DelayedSolver, OracleSolver, RandomLetterSolver};

use crate::eval::EvalMode;

pub const DEFAULT_SOLVER_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum SolverError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("could not extract answer: {0}")]
    Extraction(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("solver does not support {0:?} mode")]
    UnsupportedMode(EvalMode),
    #[error("invalid solver config: {0}")]
    Config(String),
}

/// Everything a solver may see for one trial. Ground truth is never part of
/// it; mocks that need it look it up by `challenge_id`.
#[derive(Debug, Clone, Copy)]
pub struct SolverInput<'a> {
    pub challenge_id: &'a str,
    pub mode: EvalMode,
    pub prompt: &'a str,
    pub image_png: Option<&'a [u8]>,
    pub audio_wav: Option<&'a [u8]>,
}

/// A solver under test. Implementations must not carry state between
/// trials.
pub trait SolverAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn supports(&self, mode: EvalMode) -> bool;

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError>;
}

impl<S: SolverAdapter + ?Sized> SolverAdapter for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn supports(&self, mode: EvalMode) -> bool {
        (**self).supports(mode)
    }

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        (**self).solve(input)
    }
}
