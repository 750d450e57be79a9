use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};

fn map_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("format not supported".into()),
        hound::Error::IoError(err) => AudioError::CorruptHeader(err.to_string()),
        other => AudioError::CorruptHeader(other.to_string()),
    }
}

/// Decodes RIFF/WAVE bytes holding 16-bit PCM or 32-bit float, mono or
/// stereo. Stereo is averaged down to mono.
pub fn load_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_err)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedEncoding(format!("{channels} channels")));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_err)?,
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(map_err)?,
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{bits}-bit {format:?}")));
        }
    };

    let samples = if channels == 2 {
        interleaved.chunks_exact(2).map(|f| ((f64::from(f[0]) + f64::from(f[1])) / 2.0) as f32).collect()
    } else {
        interleaved
    };
    AudioClip::new(spec.sample_rate, samples)
}

/// Encodes a clip as mono 16-bit PCM WAV.
pub fn save_wav(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    let spec =
        WavSpec { channels: 1, sample_rate: clip.sample_rate(), bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut cursor, spec).map_err(map_err)?;
        for &s in clip.samples() {
            let q = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(map_err)?;
        }
        writer.finalize().map_err(map_err)?;
    }
    Ok(cursor.into_inner())
}

pub fn load_wav_file(path: &Path) -> Result<AudioClip, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })?;
    load_wav(&bytes)
}

pub fn save_wav_file(clip: &AudioClip, path: &Path) -> Result<(), AudioError> {
    let bytes = save_wav(clip)?;
    std::fs::write(path, bytes).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })
}
