use std::f64::consts::PI;
use std::io::Cursor;

use evocaptcha_core::audio::{
    add_gaussian, add_gaussian_detailed, load_wav, measured_snr_db, mix_background, mix_background_detailed,
    overlay_distractors, overlay_distractors_detailed, resample_linear, rms_of, save_wav, snr_db_of, AudioClip,
    AudioError, CANONICAL_RATE,
};
use evocaptcha_core::rng::rng_for;
use proptest::prelude::*;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn sine(freq: f64, amp: f64, rate: u32, seconds: f64) -> AudioClip {
    let n = (f64::from(rate) * seconds).round() as usize;
    let s = (0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32).collect();
    AudioClip::new(rate, s).unwrap()
}

/// Harmonic tone under a syllable-rate envelope, a rough stand-in for speech.
fn speechlike(seed: u64, seconds: f64) -> AudioClip {
    let mut rng = rng_for(seed, 999);
    let f0: f64 = rng.random_range(90.0..220.0);
    let rate = f64::from(CANONICAL_RATE);
    let n = (rate * seconds) as usize;
    let s = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let env = 0.5 + 0.5 * (2.0 * PI * 4.0 * t).sin();
            let tone: f64 = (1..=5).map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64).sum();
            (0.15 * env * tone) as f32
        })
        .collect();
    AudioClip::new(CANONICAL_RATE, s).unwrap()
}

fn white(seed: u64, len: usize, amp: f32) -> AudioClip {
    let mut rng = rng_for(seed, 7);
    AudioClip::new(CANONICAL_RATE, (0..len).map(|_| rng.random_range(-amp..amp)).collect()).unwrap()
}

fn diff(a: &AudioClip, b: &AudioClip) -> Vec<f32> {
    a.samples().iter().zip(b.samples()).map(|(x, y)| x - y).collect()
}

fn wav_bytes(spec: hound::WavSpec, write: impl FnOnce(&mut hound::WavWriter<&mut Cursor<Vec<u8>>>)) -> Vec<u8> {
    let mut cur = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cur, spec).unwrap();
        write(&mut w);
        w.finalize().unwrap();
    }
    cur.into_inner()
}

#[test]
fn wav_round_trip_within_quantization() {
    let c = sine(440.0, 0.9, 22050, 1.0);
    let back = load_wav(&save_wav(&c).unwrap()).unwrap();
    assert_eq!(back.sample_rate(), 22050);
    assert_eq!(back.len(), c.len());
    let max = c.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    assert!(max <= 1.0 / 32768.0, "max error {max}");
}

#[test]
fn stereo_is_averaged() {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let bytes = wav_bytes(spec, |w| {
        for _ in 0..100 {
            w.write_sample(16384i16).unwrap();
            w.write_sample(-16384i16).unwrap();
        }
    });
    let c = load_wav(&bytes).unwrap();
    assert_eq!(c.len(), 100);
    assert_eq!(c.sample_rate(), 16000);
    assert!(c.samples().iter().all(|s| *s == 0.0));
}

#[test]
fn float_wav_loads() {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let bytes = wav_bytes(spec, |w| {
        for v in [0.25f32, -0.5, 1.5] {
            w.write_sample(v).unwrap();
        }
    });
    assert_eq!(load_wav(&bytes).unwrap().samples(), &[0.25, -0.5, 1.0]);
}

#[test]
fn unsupported_and_corrupt_inputs() {
    let spec =
        hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
    let eight_bit = wav_bytes(spec, |w| w.write_sample(3i8).unwrap());
    assert!(matches!(load_wav(&eight_bit), Err(AudioError::UnsupportedEncoding(_))));

    // Hand-built WAVE_FORMAT_MULAW (7) header.
    let mut mulaw = Vec::new();
    mulaw.extend_from_slice(b"RIFF");
    mulaw.extend_from_slice(&(36u32 + 4).to_le_bytes());
    mulaw.extend_from_slice(b"WAVEfmt ");
    mulaw.extend_from_slice(&16u32.to_le_bytes());
    mulaw.extend_from_slice(&7u16.to_le_bytes());
    mulaw.extend_from_slice(&1u16.to_le_bytes());
    mulaw.extend_from_slice(&8000u32.to_le_bytes());
    mulaw.extend_from_slice(&8000u32.to_le_bytes());
    mulaw.extend_from_slice(&1u16.to_le_bytes());
    mulaw.extend_from_slice(&8u16.to_le_bytes());
    mulaw.extend_from_slice(b"data");
    mulaw.extend_from_slice(&4u32.to_le_bytes());
    mulaw.extend_from_slice(&[0xff, 0x7f, 0x00, 0x80]);
    assert!(matches!(load_wav(&mulaw), Err(AudioError::UnsupportedEncoding(_))));

    assert!(matches!(load_wav(b"not a wav file"), Err(AudioError::CorruptHeader(_))));
    assert!(matches!(load_wav(&[]), Err(AudioError::CorruptHeader(_))));
}

#[test]
fn background_snr_calibration_grid() {
    for snr in [0.0, 5.0, 10.0, 20.0] {
        for seed in 0..20 {
            let target = speechlike(seed, 1.0);
            let bed = white(seed + 100, 30_000, 0.3);
            let out = mix_background_detailed(&target, &bed, snr, &mut rng_for(seed, 1)).unwrap();
            let measured = snr_db_of(target.samples(), &out.components[0]).unwrap();
            assert!((measured - snr).abs() < 0.01, "snr {snr} seed {seed}: {measured}");
            assert_eq!(out.mixed.len(), target.len());
        }
    }
}

#[test]
fn background_snr_from_output_when_unclipped() {
    let target = sine(440.0, 0.3, CANONICAL_RATE, 1.0);
    let bed = white(3, 5000, 0.5);
    let out = mix_background_detailed(&target, &bed, 0.0, &mut rng_for(1, 1)).unwrap();
    assert_eq!(out.clipped, 0);
    let noise = diff(&out.mixed, &target);
    assert!(snr_db_of(target.samples(), &noise).unwrap().abs() < 0.1);
}

#[test]
fn vanishing_noise_limits() {
    let target = speechlike(1, 1.0);
    let bed = white(2, 10_000, 0.5);
    let out = mix_background(&target, &bed, 80.0, &mut rng_for(0, 0)).unwrap();
    assert!(diff(&out, &target).iter().all(|d| d.abs() < 1e-3));

    let sigma = rms_of(target.samples()).unwrap() * 1e-4;
    let out = add_gaussian(&target, 80.0, &mut rng_for(0, 0)).unwrap();
    assert!(diff(&out, &target).iter().all(|d| f64::from(d.abs()) < 6.0 * sigma));

    let other = speechlike(9, 0.4);
    let out = overlay_distractors(&target, &[other], -200.0).unwrap();
    assert!(diff(&out, &target).iter().all(|d| d.abs() < 1e-3));
}

#[test]
fn gaussian_statistics_match_request() {
    let target = speechlike(4, 3.0);
    let sigma = rms_of(target.samples()).unwrap() / 10f64.powf(0.5);
    let out = add_gaussian_detailed(&target, 10.0, &mut rng_for(11, 0)).unwrap();
    assert_eq!(out.clipped, 0);
    let noise = diff(&out.mixed, &target);
    let n = noise.len() as f64;
    let mean = noise.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = noise.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    assert!((var.sqrt() / sigma - 1.0).abs() < 0.02, "sd {} vs {sigma}", var.sqrt());
}

#[test]
fn gaussian_snr_calibration_grid() {
    for snr in [0.0, 5.0, 10.0, 20.0] {
        for seed in 0..20 {
            let target = speechlike(seed, 1.0);
            let out = add_gaussian_detailed(&target, snr, &mut rng_for(seed, 2)).unwrap();
            let measured = snr_db_of(target.samples(), &out.components[0]).unwrap();
            assert!((measured - snr).abs() < 0.1, "snr {snr} seed {seed}: {measured}");
        }
    }
}

#[test]
fn stochastic_ops_are_deterministic() {
    let target = speechlike(5, 0.5);
    let bed = white(6, 4000, 0.4);
    let a = save_wav(&add_gaussian(&target, 10.0, &mut rng_for(42, 0)).unwrap()).unwrap();
    let b = save_wav(&add_gaussian(&target, 10.0, &mut rng_for(42, 0)).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = save_wav(&add_gaussian(&target, 10.0, &mut rng_for(43, 0)).unwrap()).unwrap();
    assert_ne!(a, c);
    let a = mix_background(&target, &bed, 10.0, &mut rng_for(42, 0)).unwrap();
    let b = mix_background(&target, &bed, 10.0, &mut rng_for(42, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn overlay_superposition_and_gain() {
    let target = sine(300.0, 0.7, CANONICAL_RATE, 0.5);
    let out = overlay_distractors(&target, std::slice::from_ref(&target), 0.0).unwrap();
    for (o, t) in out.samples().iter().zip(target.samples()) {
        assert!((o - (2.0 * t).clamp(-1.0, 1.0)).abs() < 1e-6);
    }

    let target = speechlike(1, 2.0);
    let ds = [speechlike(2, 1.3), speechlike(3, 2.5)];
    let out = overlay_distractors_detailed(&target, &ds, -6.0).unwrap();
    assert_eq!(out.components.len(), 2);
    for comp in &out.components {
        let ratio = snr_db_of(target.samples(), comp).unwrap();
        assert!((ratio - 6.0).abs() < 0.5, "{ratio}");
    }
}

#[test]
fn mix_errors() {
    let target = speechlike(1, 0.2);
    let other_rate = AudioClip::new(16000, vec![0.1; 100]).unwrap();
    assert!(matches!(
        mix_background(&target, &other_rate, 10.0, &mut rng_for(0, 0)),
        Err(AudioError::RateMismatch { expected: 22050, found: 16000 })
    ));
    assert!(matches!(overlay_distractors(&target, &[other_rate], -6.0), Err(AudioError::RateMismatch { .. })));
    assert!(matches!(overlay_distractors(&target, &[], -6.0), Err(AudioError::EmptyDistractors)));
    let empty = AudioClip::silence(CANONICAL_RATE, 0);
    assert!(matches!(add_gaussian(&empty, 10.0, &mut rng_for(0, 0)), Err(AudioError::EmptyClip)));
    assert!(matches!(
        measured_snr_db(&target, &AudioClip::silence(CANONICAL_RATE, target.len())),
        Err(AudioError::ZeroNoise)
    ));
}

fn dominant_hz(clip: &AudioClip) -> f64 {
    let n = clip.len();
    let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(f64::from(s), 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (bin, _) =
        buf[1..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, c.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    bin as f64 * f64::from(clip.sample_rate()) / n as f64
}

#[test]
fn resampled_sine_keeps_its_pitch() {
    let c = sine(440.0, 0.8, 22050, 1.0);
    let up = resample_linear(&c, 44100).unwrap();
    assert_eq!(up.len(), 44100);
    assert!((dominant_hz(&up) - 440.0).abs() <= 2.0);
    let down = resample_linear(&c, 16000).unwrap();
    assert!((dominant_hz(&down) - 440.0).abs() <= 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn background_calibration_holds(snr in -10.0f64..40.0, seed in 0u64..1000, bed_len in 50usize..20_000, len in 200usize..6000) {
        let target = speechlike(seed, len as f64 / f64::from(CANONICAL_RATE));
        let bed = white(seed, bed_len, 0.6);
        let out = mix_background_detailed(&target, &bed, snr, &mut rng_for(seed, 0)).unwrap();
        let measured = snr_db_of(target.samples(), &out.components[0]).unwrap();
        prop_assert!((measured - snr).abs() < 0.01);
        prop_assert_eq!(out.mixed.len(), target.len());
        prop_assert!(out.mixed.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn gaussian_and_overlay_preserve_shape(snr in -10.0f64..40.0, gain in -60.0f64..0.0, seed in 0u64..1000) {
        let target = speechlike(seed, 0.1);
        let g = add_gaussian(&target, snr, &mut rng_for(seed, 0)).unwrap();
        prop_assert_eq!(g.len(), target.len());
        prop_assert!(g.samples().iter().all(|s| s.abs() <= 1.0));
        let ds = [white(seed, 777, 0.9), speechlike(seed + 1, 0.05)];
        let out = overlay_distractors_detailed(&target, &ds, gain).unwrap();
        prop_assert_eq!(out.mixed.len(), target.len());
        prop_assert!(out.mixed.samples().iter().all(|s| s.abs() <= 1.0));
        for comp in &out.components {
            prop_assert!((snr_db_of(target.samples(), comp).unwrap() + gain).abs() < 0.01);
        }
    }

    #[test]
    fn resample_preserves_duration(len in 1usize..5000, from in 4000u32..48000, to in 4000u32..48000) {
        let c = AudioClip::new(from, vec![0.1; len]).unwrap();
        let r = resample_linear(&c, to).unwrap();
        prop_assert!((r.duration_seconds() - c.duration_seconds()).abs() <= 1.0 / f64::from(to) + 1e-12);
        prop_assert!(r.samples().iter().all(|s| (s - 0.1).abs() < 1e-6));
    }

    #[test]
    fn wav_round_trip_bound(samples in prop::collection::vec(-1.0f32..=1.0, 1..500), rate in 1000u32..96000) {
        let c = AudioClip::new(rate, samples).unwrap();
        let back = load_wav(&save_wav(&c).unwrap()).unwrap();
        prop_assert_eq!(back.sample_rate(), rate);
        for (a, b) in c.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
