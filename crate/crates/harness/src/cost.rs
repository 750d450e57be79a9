//! Generation cost versus solving cost.

use evocaptcha_core::audio_challenge::AudioManifest;
use evocaptcha_core::challenge::DatasetCosts;
use serde::{Deserialize, Serialize};

use crate::eval::TrialRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub generation_samples: usize,
    pub mean_generation_seconds: f64,
    pub solve_trials: usize,
    pub mean_solve_seconds: f64,
    /// Solve time over generation time; `None` when either side is empty
    /// or generation time is zero.
    pub ratio: Option<f64>,
}

/// Per-challenge generation times of an ASCII dataset, images included.
pub fn generation_seconds_ascii(costs: &DatasetCosts) -> Vec<f64> {
    costs.text_seconds.iter().enumerate().map(|(i, t)| t + costs.image_seconds.get(i).copied().unwrap_or(0.0)).collect()
}

/// Per-challenge generation times of an audio dataset: synthesis plus
/// post-processing.
pub fn generation_seconds_audio(manifest: &AudioManifest) -> Vec<f64> {
    manifest.entries.iter().map(|e| e.gen_cost.total_seconds()).collect()
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Compares mean generation time with mean solver time over successful
/// trials.
pub fn cost_report(generation_seconds: &[f64], trials: &[TrialRecord]) -> CostReport {
    let solve: Vec<f64> = trials.iter().filter(|t| !t.is_error()).map(|t| t.response_seconds).collect();
    let generation = mean(generation_seconds);
    let solving = mean(&solve);
    CostReport {
        generation_samples: generation_seconds.len(),
        mean_generation_seconds: generation.unwrap_or(0.0),
        solve_trials: solve.len(),
        mean_solve_seconds: solving.unwrap_or(0.0),
        ratio: match (generation, solving) {
            (Some(g), Some(s)) if g > 0.0 => Some(s / g),
            _ => None,
        },
    }
}
