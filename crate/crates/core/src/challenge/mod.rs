//! ASCII-art CAPTCHA generation: random answers, font choice, rasterized
//! images and reproducible on-disk datasets.

mod dataset;
mod raster;

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::figlet::{render, AsciiArt, FigletError, FigletFont, LayoutMode};
pub use crate::rng::{rng_for, RNG_VERSION};

pub use dataset::{
    generate_dataset, load_manifest, DatasetCosts, DatasetManifest, ManifestEntry, COSTS_FILE, MANIFEST_FILE,
};
pub use raster::{rasterize, RasterSpec};

#[derive(Debug, Error)]
pub enum ChallengeError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("charset is empty after removing ambiguous characters")]
    EmptyCharset,
    #[error("no fonts to choose from")]
    EmptyFontList,
    #[error("font {font:?} cannot draw charset character {ch:?}")]
    UnrenderableCharset { font: String, ch: char },
    #[error(transparent)]
    Figlet(#[from] FigletError),
    #[error("cannot rasterize empty art")]
    EmptyArt,
    #[error("image would be {width}x{height} px, above the {cap} px cap")]
    OversizeImage { width: u64, height: u64, cap: u32 },
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error("duplicate challenge id {0}")]
    DuplicateId(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Which layout to render answers with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LayoutPolicy {
    /// Each font's declared layout.
    #[default]
    FontDefault,
    Fixed(LayoutMode),
}

impl LayoutPolicy {
    pub fn resolve(self, font: &FigletFont) -> LayoutMode {
        match self {
            LayoutPolicy::FontDefault => font.default_layout(),
            LayoutPolicy::Fixed(mode) => mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub charset: String,
    pub ambiguous_exclusions: String,
    pub seed: u64,
    pub layout: LayoutPolicy,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            min_len: 7,
            max_len: 15,
            charset: "ABCDEFGHIJKLMNOPQRSTUVWXYZ23456789".into(),
            ambiguous_exclusions: "O0I1L".into(),
            seed: 0,
            layout: LayoutPolicy::FontDefault,
        }
    }
}

impl GenConfig {
    /// Charset with exclusions removed, duplicates dropped, order kept.
    pub fn effective_charset(&self) -> Vec<char> {
        let mut out: Vec<char> = Vec::new();
        for c in self.charset.chars() {
            if !self.ambiguous_exclusions.contains(c) && !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<Vec<char>, ChallengeError> {
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(ChallengeError::InvalidConfig(format!(
                "need 1 <= min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        let charset = self.effective_charset();
        if charset.is_empty() {
            return Err(ChallengeError::EmptyCharset);
        }
        Ok(charset)
    }

    /// Checks that every font can draw every charset character.
    pub fn check_fonts(&self, fonts: &[FigletFont]) -> Result<(), ChallengeError> {
        if fonts.is_empty() {
            return Err(ChallengeError::EmptyFontList);
        }
        let charset = self.validate()?;
        for font in fonts {
            if let Some(&ch) = charset.iter().find(|c| !font.can_render(**c)) {
                return Err(ChallengeError::UnrenderableCharset { font: font.name().to_owned(), ch });
            }
        }
        Ok(())
    }
}

/// Draws a uniformly random length, then uniformly random characters.
pub fn random_answer<R: Rng + ?Sized>(rng: &mut R, config: &GenConfig) -> Result<String, ChallengeError> {
    let charset = config.validate()?;
    let len = rng.random_range(config.min_len..=config.max_len);
    Ok((0..len).map(|_| charset[rng.random_range(0..charset.len())]).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsciiChallenge {
    pub id: String,
    pub answer: String,
    pub font_name: String,
    pub layout: LayoutMode,
    pub art: AsciiArt,
    #[serde(skip)]
    pub image: Option<Vec<u8>>,
    pub created_at: DateTime<Utc>,
}

/// Generates one challenge: a 128-bit id, a uniformly chosen font and a
/// random answer, drawn from `rng` in that order.
pub fn generate_challenge<R: Rng + ?Sized>(
    rng: &mut R,
    fonts: &[FigletFont],
    config: &GenConfig,
    image: Option<&RasterSpec>,
) -> Result<AsciiChallenge, ChallengeError> {
    if fonts.is_empty() {
        return Err(ChallengeError::EmptyFontList);
    }
    let id = hex::encode(rng.random::<u128>().to_be_bytes());
    let font = &fonts[rng.random_range(0..fonts.len())];
    let answer = random_answer(rng, config)?;
    let layout = config.layout.resolve(font);
    let art = render(font, &answer, layout)?;
    let image = image.map(|spec| rasterize(&art, spec)).transpose()?;
    Ok(AsciiChallenge { id, answer, font_name: font.name().to_owned(), layout, art, image, created_at: Utc::now() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_charset_has_31_symbols() {
        let cs = GenConfig::default().effective_charset();
        assert_eq!(cs.len(), 31);
        assert!(!cs.iter().any(|c| "O0I1L".contains(*c)));
    }

    #[test]
    fn degenerate_charset() {
        let cfg = GenConfig { min_len: 7, max_len: 7, charset: "A".into(), ..GenConfig::default() };
        assert_eq!(random_answer(&mut rng_for(1, 0), &cfg).unwrap(), "AAAAAAA");
    }

    #[test]
    fn config_validation() {
        let bad = GenConfig { min_len: 0, ..GenConfig::default() };
        assert!(matches!(bad.validate(), Err(ChallengeError::InvalidConfig(_))));
        let bad = GenConfig { min_len: 9, max_len: 8, ..GenConfig::default() };
        assert!(matches!(bad.validate(), Err(ChallengeError::InvalidConfig(_))));
        let bad = GenConfig { charset: "O0".into(), ..GenConfig::default() };
        assert!(matches!(bad.validate(), Err(ChallengeError::EmptyCharset)));
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = GenConfig { layout: LayoutPolicy::Fixed(LayoutMode::Kerning), seed: 99, ..GenConfig::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""layout":{"policy":"fixed","mode":"kerning"}"#), "{json}");
        assert_eq!(serde_json::from_str::<GenConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = rng_for(5, 3).random();
        let _ = rng_for(5, 2).random::<u64>();
        let b: u64 = rng_for(5, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, rng_for(5, 4).random::<u64>());
    }
}
