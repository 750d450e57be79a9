use std::collections::HashMap;
use std::sync::Arc;

use evocaptcha_core::audio_challenge::AudioManifest;
use evocaptcha_core::challenge::DatasetManifest;
use evocaptcha_core::rng::rng_for;
use evocaptcha_core::scoring::ChoiceLabel;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{SolverAdapter, SolverError, SolverInput};
use crate::clock::ManualClock;
use crate::eval::EvalMode;

/// Answers every challenge correctly. The upper bound of any run.
#[derive(Debug, Clone, Default)]
pub struct OracleSolver {
    answers: HashMap<String, String>,
}

impl OracleSolver {
    pub fn new(answers: HashMap<String, String>) -> Self {
        Self { answers }
    }

    pub fn for_ascii(manifest: &DatasetManifest) -> Self {
        Self::new(manifest.entries.iter().map(|e| (e.id.clone(), e.answer.clone())).collect())
    }

    pub fn for_audio(manifest: &AudioManifest) -> Self {
        Self::new(manifest.entries.iter().map(|e| (e.id.clone(), e.answer_key.to_string())).collect())
    }
}

impl SolverAdapter for OracleSolver {
    fn name(&self) -> &str {
        "oracle"
    }

    fn supports(&self, _mode: EvalMode) -> bool {
        true
    }

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        self.answers
            .get(input.challenge_id)
            .cloned()
            .ok_or_else(|| SolverError::Extraction(format!("no answer for {}", input.challenge_id)))
    }
}

/// Picks a letter A-E uniformly. The pick depends only on the seed and the
/// challenge id, so runs are reproducible in any order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomLetterSolver {
    pub seed: u64,
}

impl SolverAdapter for RandomLetterSolver {
    fn name(&self) -> &str {
        "random-letter"
    }

    fn supports(&self, mode: EvalMode) -> bool {
        mode == EvalMode::Audio
    }

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        let digest = Sha256::digest(input.challenge_id.as_bytes());
        let stream = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let label = ChoiceLabel::ALL[rng_for(self.seed, stream).random_range(0..5)];
        Ok(label.to_string())
    }
}

/// Returns the same response every time.
#[derive(Debug, Clone, Default)]
pub struct ConstantSolver {
    pub response: String,
}

impl SolverAdapter for ConstantSolver {
    fn name(&self) -> &str {
        "constant"
    }

    fn supports(&self, _mode: EvalMode) -> bool {
        true
    }

    fn solve(&self, _input: &SolverInput<'_>) -> Result<String, SolverError> {
        Ok(self.response.clone())
    }
}

/// Advances a [`ManualClock`] by a fixed latency on every call, simulating a
/// slow solver without sleeping.
pub struct DelayedSolver<S> {
    pub inner: S,
    pub clock: Arc<ManualClock>,
    pub seconds: f64,
}

impl<S: SolverAdapter> SolverAdapter for DelayedSolver<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn supports(&self, mode: EvalMode) -> bool {
        self.inner.supports(mode)
    }

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        self.clock.advance_seconds(self.seconds);
        self.inner.solve(input)
    }
}
