use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{db_to_gain, rms_of, AudioClip, AudioError};

/// A mix together with the components that were added to the target,
/// before clipping.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub mixed: AudioClip,
    /// One entry per added stream, each `len(target)` samples long.
    pub components: Vec<Vec<f32>>,
    /// Number of output samples that had to be clipped.
    pub clipped: usize,
}

fn check_rate(target: &AudioClip, other: &AudioClip) -> Result<(), AudioError> {
    if target.sample_rate() != other.sample_rate() {
        return Err(AudioError::RateMismatch { expected: target.sample_rate(), found: other.sample_rate() });
    }
    Ok(())
}

/// `len` samples of `source` read circularly from `offset`.
fn loop_to_len(source: &[f32], len: usize, offset: usize) -> Vec<f32> {
    source.iter().cycle().skip(offset % source.len()).take(len).copied().collect()
}

fn sum_and_clip(target: &AudioClip, components: Vec<Vec<f32>>) -> MixOutcome {
    let mut clipped = 0;
    let samples = (0..target.len())
        .map(|i| {
            let v = f64::from(target.samples()[i]) + components.iter().map(|c| f64::from(c[i])).sum::<f64>();
            if v.abs() > 1.0 {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0) as f32
        })
        .collect();
    MixOutcome { mixed: AudioClip::from_clipped(target.sample_rate(), samples), components, clipped }
}

fn scale(samples: &mut [f32], gain: f64) {
    for s in samples {
        *s = (f64::from(*s) * gain) as f32;
    }
}

/// Adds a background bed at `snr_db` relative to the target.
///
/// The bed is looped or cropped to the target length starting at a random
/// circular offset, then scaled so that the SNR of the target against that
/// segment is exactly `snr_db`.
pub fn mix_background_detailed<R: Rng + ?Sized>(
    target: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<MixOutcome, AudioError> {
    if !snr_db.is_finite() {
        return Err(AudioError::InvalidParameter(format!("snr_db must be finite, got {snr_db}")));
    }
    check_rate(target, noise)?;
    let target_rms = rms_of(target.samples())?;
    if noise.is_empty() {
        return Err(AudioError::ZeroNoise);
    }
    let offset = rng.random_range(0..noise.len());
    let mut segment = loop_to_len(noise.samples(), target.len(), offset);
    let seg_rms = rms_of(&segment)?;
    if seg_rms == 0.0 {
        return Err(AudioError::ZeroNoise);
    }
    scale(&mut segment, target_rms / (seg_rms * db_to_gain(snr_db)));
    Ok(sum_and_clip(target, vec![segment]))
}

pub fn mix_background<R: Rng + ?Sized>(
    target: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<AudioClip, AudioError> {
    mix_background_detailed(target, noise, snr_db, rng).map(|o| o.mixed)
}

/// Adds i.i.d. zero-mean normal noise with `sigma = rms(target) / 10^(snr_db/20)`.
pub fn add_gaussian_detailed<R: Rng + ?Sized>(
    target: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<MixOutcome, AudioError> {
    if !snr_db.is_finite() {
        return Err(AudioError::InvalidParameter(format!("snr_db must be finite, got {snr_db}")));
    }
    let sigma = rms_of(target.samples())? / db_to_gain(snr_db);
    let normal = Normal::new(0.0, sigma).map_err(|e| AudioError::InvalidParameter(e.to_string()))?;
    let noise: Vec<f32> = (0..target.len()).map(|_| normal.sample(rng) as f32).collect();
    Ok(sum_and_clip(target, vec![noise]))
}

pub fn add_gaussian<R: Rng + ?Sized>(target: &AudioClip, snr_db: f64, rng: &mut R) -> Result<AudioClip, AudioError> {
    add_gaussian_detailed(target, snr_db, rng).map(|o| o.mixed)
}

/// Mixes competing speech under the target.
///
/// Each distractor is looped or cropped to the target length from its start,
/// level-matched to the target RMS, then attenuated by `gain_db`.
pub fn overlay_distractors_detailed(
    target: &AudioClip,
    distractors: &[AudioClip],
    gain_db: f64,
) -> Result<MixOutcome, AudioError> {
    if distractors.is_empty() {
        return Err(AudioError::EmptyDistractors);
    }
    if !gain_db.is_finite() {
        return Err(AudioError::InvalidParameter(format!("gain must be finite, got {gain_db}")));
    }
    let target_rms = rms_of(target.samples())?;
    let gain = db_to_gain(gain_db);
    let mut components = Vec::with_capacity(distractors.len());
    for d in distractors {
        check_rate(target, d)?;
        if d.is_empty() {
            return Err(AudioError::EmptyClip);
        }
        let mut segment = loop_to_len(d.samples(), target.len(), 0);
        let seg_rms = rms_of(&segment)?;
        if seg_rms == 0.0 {
            return Err(AudioError::ZeroNoise);
        }
        scale(&mut segment, gain * target_rms / seg_rms);
        components.push(segment);
    }
    Ok(sum_and_clip(target, components))
}

pub fn overlay_distractors(
    target: &AudioClip,
    distractors: &[AudioClip],
    gain_db: f64,
) -> Result<AudioClip, AudioError> {
    overlay_distractors_detailed(target, distractors, gain_db).map(|o| o.mixed)
}
