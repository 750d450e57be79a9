//! Solver prompt templates, kept verbatim as text fixtures.

/// Instruction sent with every ASCII-art challenge, text or image.
pub const ASCII_RECOGNITION: &str = include_str!("../prompts/ascii_recognition.txt");

/// Multiple-choice template for audio challenges; `{A}`..`{E}` are filled by
/// [`crate::audio_challenge::render_solver_prompt`].
pub const AUDIO_CHOICE: &str = include_str!("../prompts/audio_choice.txt");
