use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{build_challenge, BuildOptions, GenCost, NoiseBank};
use super::qa::QaItem;
use super::tts::TtsProvider;
use super::AudioChallengeError;
use crate::audio::{save_wav_file, MixSpec};
use crate::rng::{rng_for, RNG_VERSION};
use crate::scoring::ChoiceLabel;

pub const AUDIO_MANIFEST_FILE: &str = "manifest.json";

/// External encoder run as `program args...` with `{input}` and `{output}`
/// substituted, e.g. `ffmpeg -y -i {input} {output}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderHook {
    pub program: String,
    pub args: Vec<String>,
    /// Extension of the encoded file, without the dot.
    pub extension: String,
}

impl EncoderHook {
    pub fn encode(&self, input: &Path) -> Result<PathBuf, AudioChallengeError> {
        let output = input.with_extension(&self.extension);
        let args = self
            .args
            .iter()
            .map(|a| a.replace("{input}", &input.to_string_lossy()).replace("{output}", &output.to_string_lossy()));
        let out = Command::new(&self.program)
            .args(args)
            .output()
            .map_err(|e| AudioChallengeError::Encoder(format!("{}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(AudioChallengeError::Encoder(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioManifestEntry {
    pub id: String,
    pub qa_id: String,
    pub environment: MixSpec,
    pub answer_key: ChoiceLabel,
    /// Relative to the dataset directory.
    pub audio_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoded_path: Option<String>,
    pub distractor_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bed: Option<String>,
    pub duration_seconds: f64,
    pub gen_cost: GenCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioManifest {
    pub version: u32,
    pub rng: String,
    pub seed: u64,
    pub tts_provider: String,
    pub options: BuildOptions,
    pub created_at: DateTime<Utc>,
    /// Full question records so the set can be evaluated offline.
    pub items: Vec<QaItem>,
    pub entries: Vec<AudioManifestEntry>,
    pub wall_seconds: f64,
}

impl AudioManifest {
    pub fn item(&self, qa_id: &str) -> Option<&QaItem> {
        self.items.iter().find(|q| q.id == qa_id)
    }

    pub fn load(path: &Path) -> Result<Self, AudioChallengeError> {
        let file = if path.is_dir() { path.join(AUDIO_MANIFEST_FILE) } else { path.to_path_buf() };
        let raw = fs::read(&file).map_err(|e| AudioChallengeError::Dataset(format!("{}: {e}", file.display())))?;
        serde_json::from_slice(&raw).map_err(|e| AudioChallengeError::Dataset(format!("{}: {e}", file.display())))
    }
}

/// One challenge to build: a question under an environment.
#[derive(Debug, Clone)]
pub struct AudioJob {
    pub qa: QaItem,
    pub environment: MixSpec,
}

/// Builds every job and writes `audio/<id>.wav` plus the manifest.
/// Job `i` uses stream `i` of `seed`.
pub fn generate_audio_dataset<P: TtsProvider + ?Sized>(
    jobs: &[AudioJob],
    tts: &P,
    bank: &NoiseBank,
    options: &BuildOptions,
    seed: u64,
    out_dir: &Path,
    encoder: Option<&EncoderHook>,
) -> Result<AudioManifest, AudioChallengeError> {
    if jobs.is_empty() {
        return Err(AudioChallengeError::EmptyDataset { skipped: 0 });
    }
    let started = Instant::now();
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir)
        .map_err(|e| AudioChallengeError::Dataset(format!("{}: {e}", audio_dir.display())))?;

    let entries = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let mut rng = rng_for(seed, i as u64);
            let challenge = build_challenge(&job.qa, job.environment, tts, bank, &mut rng, options)?;
            let audio = challenge.audio()?;
            let rel = format!("audio/{}.wav", challenge.id);
            let path = out_dir.join(&rel);
            save_wav_file(audio, &path)?;
            let encoded_path = encoder
                .map(|hook| {
                    hook.encode(&path).map(|p| p.strip_prefix(out_dir).unwrap_or(&p).to_string_lossy().into_owned())
                })
                .transpose()?;
            Ok(AudioManifestEntry {
                id: challenge.id.clone(),
                qa_id: job.qa.id.clone(),
                environment: job.environment,
                answer_key: job.qa.answer_key,
                audio_path: rel,
                encoded_path,
                distractor_ids: challenge.distractor_ids.clone(),
                noise_bed: challenge.noise_bed.clone(),
                duration_seconds: audio.duration_seconds(),
                gen_cost: challenge.gen_cost.clone(),
            })
        })
        .collect::<Result<Vec<_>, AudioChallengeError>>()?;

    let mut items: Vec<QaItem> = Vec::new();
    for job in jobs {
        if !items.iter().any(|q| q.id == job.qa.id) {
            items.push(job.qa.clone());
        }
    }
    let manifest = AudioManifest {
        version: 1,
        rng: RNG_VERSION.into(),
        seed,
        tts_provider: tts.name().to_owned(),
        options: options.clone(),
        created_at: Utc::now(),
        items,
        entries,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let path = out_dir.join(AUDIO_MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| AudioChallengeError::Dataset(e.to_string()))?;
    fs::write(&path, json).map_err(|e| AudioChallengeError::Dataset(format!("{}: {e}", path.display())))?;
    tracing::info!(n = jobs.len(), dir = %out_dir.display(), "audio dataset written");
    Ok(manifest)
}
