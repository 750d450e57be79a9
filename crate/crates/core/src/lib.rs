//! Core primitives for ASCII-art and audio CAPTCHAs: FIGlet rendering,
//! challenge generation, audio DSP, audio question building and scoring.

pub mod audio;
pub mod audio_challenge;
pub mod challenge;
pub mod figlet;
pub mod prompts;
pub mod rng;
pub mod scoring;
