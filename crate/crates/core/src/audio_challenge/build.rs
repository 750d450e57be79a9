use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qa::QaItem;
use super::tts::{synthesize, TtsProvider, TtsRequest, DEFAULT_TTS_TIMEOUT};
use super::AudioChallengeError;
use crate::audio::{
    add_gaussian, load_wav_file, mix_background, overlay_distractors, resample_linear, AudioClip, MixSpec,
    CANONICAL_RATE,
};
use crate::scoring::ChoiceLabel;

use crate::prompts::AUDIO_CHOICE as SOLVER_PROMPT;

/// Background beds and the question pool distractors are drawn from.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    beds: Vec<(String, AudioClip)>,
    distractors: Vec<QaItem>,
}

impl NoiseBank {
    pub fn new(distractors: Vec<QaItem>) -> Self {
        Self { beds: Vec::new(), distractors }
    }

    /// Adds a bed, resampled to the canonical rate.
    pub fn with_bed(mut self, name: impl Into<String>, clip: AudioClip) -> Result<Self, AudioChallengeError> {
        let clip = resample_linear(&clip, CANONICAL_RATE)?;
        self.beds.push((name.into(), clip));
        Ok(self)
    }

    pub fn with_bed_file(self, path: &Path) -> Result<Self, AudioChallengeError> {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let clip = load_wav_file(path)?;
        self.with_bed(name, clip)
    }

    pub fn beds(&self) -> impl Iterator<Item = &str> {
        self.beds.iter().map(|(n, _)| n.as_str())
    }

    pub fn distractor_pool(&self) -> &[QaItem] {
        &self.distractors
    }
}

/// The ambient bed shipped with the crate.
pub fn bundled_noise_bed() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/noise/cafe_ambience.wav")
}

/// The 40-item question sample shipped with the crate.
pub fn bundled_qa_sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/commonsense_qa_sample.jsonl")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub voice: String,
    pub language: String,
    /// Voices for distractor clips, used in turn. Falls back to `voice`.
    pub distractor_voices: Vec<String>,
    #[serde(with = "secs")]
    pub tts_timeout: Duration,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            voice: "default".into(),
            language: "en".into(),
            distractor_voices: vec!["distractor-1".into(), "distractor-2".into()],
            tts_timeout: DEFAULT_TTS_TIMEOUT,
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    /// One entry per synthesized clip: the question first, then distractors.
    pub synth_seconds: Vec<f64>,
    pub post_process_seconds: f64,
}

impl GenCost {
    pub fn total_seconds(&self) -> f64 {
        self.synth_seconds.iter().sum::<f64>() + self.post_process_seconds
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AudioChallenge {
    pub id: String,
    pub qa: QaItem,
    pub environment: MixSpec,
    #[serde(skip)]
    pub audio: Option<AudioClip>,
    pub distractor_ids: Vec<String>,
    pub distractor_texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bed: Option<String>,
    pub created_at: DateTime<Utc>,
    pub gen_cost: GenCost,
}

/// What a solver or browser is allowed to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAudioChallenge {
    pub id: String,
    pub environment: String,
    pub options: Vec<ClientOption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientOption {
    pub label: ChoiceLabel,
    pub text: String,
}

impl AudioChallenge {
    pub fn client_payload(&self) -> ClientAudioChallenge {
        ClientAudioChallenge {
            id: self.id.clone(),
            environment: self.environment.name().to_owned(),
            options: self.qa.options.iter().map(|o| ClientOption { label: o.label, text: o.text.clone() }).collect(),
        }
    }

    pub fn audio(&self) -> Result<&AudioClip, AudioChallengeError> {
        self.audio.as_ref().ok_or(AudioChallengeError::MissingAudio)
    }
}

/// Builds one challenge.
///
/// Draws from `rng` in this order: the 128-bit id, then for Background the
/// bed index and loop offset, for Gaussian the noise samples, for Overlap the
/// distractor questions (never the target's own id).
pub fn build_challenge<P, R>(
    qa: &QaItem,
    env: MixSpec,
    tts: &P,
    bank: &NoiseBank,
    rng: &mut R,
    options: &BuildOptions,
) -> Result<AudioChallenge, AudioChallengeError>
where
    P: TtsProvider + ?Sized,
    R: Rng + ?Sized,
{
    qa.validate().map_err(AudioChallengeError::InvalidItem)?;
    env.validate()?;
    let id = hex::encode(rng.random::<u128>().to_be_bytes());

    let question =
        synthesize(tts, &TtsRequest::new(&qa.question, &options.voice, &options.language), options.tts_timeout)?;
    let mut synth_seconds = vec![question.synth_seconds];
    let mut distractor_ids = Vec::new();
    let mut distractor_texts = Vec::new();
    let mut noise_bed = None;

    let (audio, post_process_seconds) = match env {
        MixSpec::Baseline => (question.clip, 0.0),
        MixSpec::Background { snr_db } => {
            if bank.beds.is_empty() {
                return Err(AudioChallengeError::NoNoiseBed);
            }
            let started = Instant::now();
            let (name, bed) = &bank.beds[rng.random_range(0..bank.beds.len())];
            let mixed = mix_background(&question.clip, bed, snr_db, rng)?;
            noise_bed = Some(name.clone());
            (mixed, started.elapsed().as_secs_f64())
        }
        MixSpec::Gaussian { snr_db } => {
            let started = Instant::now();
            let mixed = add_gaussian(&question.clip, snr_db, rng)?;
            (mixed, started.elapsed().as_secs_f64())
        }
        MixSpec::Overlap { distractor_gain_db, distractor_count } => {
            let pool: Vec<&QaItem> = bank.distractors.iter().filter(|d| d.id != qa.id).collect();
            if pool.len() < distractor_count {
                return Err(AudioChallengeError::InsufficientDistractors {
                    needed: distractor_count,
                    available: pool.len(),
                });
            }
            let mut clips = Vec::with_capacity(distractor_count);
            for (k, idx) in sample(rng, pool.len(), distractor_count).into_iter().enumerate() {
                let item = pool[idx];
                let voice = if options.distractor_voices.is_empty() {
                    &options.voice
                } else {
                    &options.distractor_voices[k % options.distractor_voices.len()]
                };
                let r =
                    synthesize(tts, &TtsRequest::new(&item.question, voice, &options.language), options.tts_timeout)?;
                synth_seconds.push(r.synth_seconds);
                clips.push(r.clip);
                distractor_ids.push(item.id.clone());
                distractor_texts.push(item.question.clone());
            }
            let started = Instant::now();
            let mixed = overlay_distractors(&question.clip, &clips, distractor_gain_db)?;
            (mixed, started.elapsed().as_secs_f64())
        }
    };

    Ok(AudioChallenge {
        id,
        qa: qa.clone(),
        environment: env,
        audio: Some(audio),
        distractor_ids,
        distractor_texts,
        noise_bed,
        created_at: Utc::now(),
        gen_cost: GenCost { synth_seconds, post_process_seconds },
    })
}

/// The multiple-choice prompt given to a solver alongside the audio.
/// Line breaks inside option text are flattened to single spaces.
pub fn render_solver_prompt(qa: &QaItem) -> String {
    let lines: Vec<String> = SOLVER_PROMPT
        .trim_end_matches('\n')
        .lines()
        .map(|line| {
            qa.options
                .iter()
                .map(|opt| (format!("{{{}}}", opt.label), opt))
                .find(|(placeholder, _)| line.contains(placeholder.as_str()))
                .map(|(placeholder, opt)| line.replace(&placeholder, &flatten(&opt.text)))
                .unwrap_or_else(|| line.to_owned())
        })
        .collect();
    lines.join("\n")
}

fn flatten(text: &str) -> String {
    text.split(['\r', '\n']).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ")
}
