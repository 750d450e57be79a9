//! Mono PCM clips and the transforms behind the noisy audio environments.
//!
//! Every public operation returns samples inside `[-1, 1]`; mixes are hard
//! clipped as the last step. SNR is always `20 * log10(rms(signal) / rms(noise))`.

mod mix;
mod wav;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mix::{
    add_gaussian, add_gaussian_detailed, mix_background, mix_background_detailed, overlay_distractors,
    overlay_distractors_detailed, MixOutcome,
};
pub use wav::{load_wav, load_wav_file, save_wav, save_wav_file};

/// Rate every clip is converted to before processing.
pub const CANONICAL_RATE: u32 = 22_050;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("clip has no samples")]
    EmptyClip,
    #[error("noise has zero RMS")]
    ZeroNoise,
    #[error("sample rates differ: {expected} Hz vs {found} Hz")]
    RateMismatch { expected: u32, found: u32 },
    #[error("clip lengths differ: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("at least one distractor clip is required")]
    EmptyDistractors,
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt WAV data: {0}")]
    CorruptHeader(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mono floating-point audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    sample_rate: u32,
    samples: Vec<f32>,
}

impl AudioClip {
    /// Builds a clip, rejecting non-finite samples and clamping to `[-1, 1]`.
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::InvalidParameter("samples must be finite".into()));
        }
        Ok(Self::from_clipped(sample_rate, samples))
    }

    pub(crate) fn from_clipped(sample_rate: u32, mut samples: Vec<f32>) -> Self {
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Self { sample_rate, samples }
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self { sample_rate, samples: vec![0.0; len] }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        1
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Root mean square of raw samples, computed in `f64`.
pub fn rms_of(samples: &[f32]) -> Result<f64, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let sum: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    Ok((sum / samples.len() as f64).sqrt())
}

pub fn rms(clip: &AudioClip) -> Result<f64, AudioError> {
    rms_of(&clip.samples)
}

/// SNR in dB between two equal-length sample buffers.
pub fn snr_db_of(signal: &[f32], noise: &[f32]) -> Result<f64, AudioError> {
    if signal.len() != noise.len() {
        return Err(AudioError::LengthMismatch(signal.len(), noise.len()));
    }
    let s = rms_of(signal)?;
    let n = rms_of(noise)?;
    if n == 0.0 {
        return Err(AudioError::ZeroNoise);
    }
    Ok(20.0 * (s / n).log10())
}

pub fn measured_snr_db(signal: &AudioClip, noise: &AudioClip) -> Result<f64, AudioError> {
    if signal.sample_rate != noise.sample_rate {
        return Err(AudioError::RateMismatch { expected: signal.sample_rate, found: noise.sample_rate });
    }
    snr_db_of(&signal.samples, &noise.samples)
}

/// Linear-interpolation resampler. Output length is
/// `round(len * new_rate / old_rate)`, at least one sample.
pub fn resample_linear(clip: &AudioClip, new_rate: u32) -> Result<AudioClip, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    if new_rate == 0 {
        return Err(AudioError::InvalidParameter("target rate must be positive".into()));
    }
    if new_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let old = f64::from(clip.sample_rate);
    let new = f64::from(new_rate);
    let n_out = ((clip.len() as f64 * new / old).round() as usize).max(1);
    let last = clip.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let t = i as f64 * old / new;
            let i0 = (t.floor() as usize).min(last);
            let frac = t - i0 as f64;
            let a = f64::from(clip.samples[i0]);
            let b = f64::from(clip.samples[(i0 + 1).min(last)]);
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(AudioClip::from_clipped(new_rate, samples))
}

/// The four listening environments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixSpec {
    Baseline,
    Background { snr_db: f64 },
    Gaussian { snr_db: f64 },
    Overlap { distractor_gain_db: f64, distractor_count: usize },
}

impl MixSpec {
    pub const DEFAULT_BACKGROUND_SNR_DB: f64 = 10.0;
    pub const DEFAULT_GAUSSIAN_SNR_DB: f64 = 10.0;
    pub const DEFAULT_DISTRACTOR_GAIN_DB: f64 = -6.0;
    pub const DEFAULT_DISTRACTOR_COUNT: usize = 2;

    pub fn background() -> Self {
        MixSpec::Background { snr_db: Self::DEFAULT_BACKGROUND_SNR_DB }
    }

    pub fn gaussian() -> Self {
        MixSpec::Gaussian { snr_db: Self::DEFAULT_GAUSSIAN_SNR_DB }
    }

    pub fn overlap() -> Self {
        MixSpec::Overlap {
            distractor_gain_db: Self::DEFAULT_DISTRACTOR_GAIN_DB,
            distractor_count: Self::DEFAULT_DISTRACTOR_COUNT,
        }
    }

    /// The four environments with default parameters, in table order.
    pub fn all_defaults() -> [MixSpec; 4] {
        [MixSpec::Baseline, Self::background(), Self::gaussian(), Self::overlap()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            MixSpec::Baseline => "baseline",
            MixSpec::Background { .. } => "background",
            MixSpec::Gaussian { .. } => "gaussian",
            MixSpec::Overlap { .. } => "overlap",
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        match *self {
            MixSpec::Baseline => Ok(()),
            MixSpec::Background { snr_db } | MixSpec::Gaussian { snr_db } => {
                if snr_db.is_finite() {
                    Ok(())
                } else {
                    Err(AudioError::InvalidParameter(format!("snr_db must be finite, got {snr_db}")))
                }
            }
            MixSpec::Overlap { distractor_gain_db, distractor_count } => {
                if !distractor_gain_db.is_finite() || distractor_gain_db > 0.0 {
                    return Err(AudioError::InvalidParameter(format!(
                        "distractor gain must be finite and <= 0 dB, got {distractor_gain_db}"
                    )));
                }
                if distractor_count == 0 {
                    return Err(AudioError::EmptyDistractors);
                }
                Ok(())
            }
        }
    }
}

/// Converts decibels to a linear amplitude factor.
pub fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
