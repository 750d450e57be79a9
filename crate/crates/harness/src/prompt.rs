//! The ASCII recognition prompt.

use evocaptcha_core::prompts::ASCII_RECOGNITION;

/// Builds the prompt for an ASCII challenge. With `art`, the block is placed
/// above the instruction, followed by a blank line; without it (image mode)
/// the instruction is returned as is.
pub fn render_ascii_prompt(art: Option<&str>) -> String {
    let instruction = ASCII_RECOGNITION.trim_end_matches('\n');
    match art {
        Some(block) => format!("{}\n\n{instruction}", block.trim_end_matches('\n')),
        None => instruction.to_owned(),
    }
}
