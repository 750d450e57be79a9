//! Audio multiple-choice CAPTCHAs: QA ingestion, speech synthesis through
//! pluggable providers, noisy environments and solver prompts.

mod build;
mod dataset;
mod qa;
mod tts;

use thiserror::Error;

pub use build::{
    build_challenge, bundled_noise_bed, bundled_qa_sample, render_solver_prompt, AudioChallenge, BuildOptions,
    ClientAudioChallenge, ClientOption, GenCost, NoiseBank,
};
pub use dataset::{
    generate_audio_dataset, AudioJob, AudioManifest, AudioManifestEntry, EncoderHook, AUDIO_MANIFEST_FILE,
};
pub use qa::{parse_qa_dataset, QaDataset, QaItem, QaOption, SchemaViolation};
pub use tts::{
    synthesize, ConcurrencyLimited, HttpTts, ProcessTts, StubTts, TtsError, TtsProvider, TtsRequest, TtsResult,
    DEFAULT_MAX_IN_FLIGHT, DEFAULT_TTS_TIMEOUT, DURATION_HEADER,
};

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum AudioChallengeError {
    #[error("no valid QA records ({skipped} skipped)")]
    EmptyDataset { skipped: usize },
    #[error("invalid QA item: {0}")]
    InvalidItem(String),
    #[error("need {needed} distractor questions, only {available} available")]
    InsufficientDistractors { needed: usize, available: usize },
    #[error("background environment requires a noise bed")]
    NoNoiseBed,
    #[error("challenge has no audio attached")]
    MissingAudio,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("encoder hook failed: {0}")]
    Encoder(String),
    #[error(transparent)]
    Tts(#[from] TtsError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}
