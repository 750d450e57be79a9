//! FIGlet (FLF 2.0) fonts: parsing, horizontal layout and rendering.
//!
//! A [`FigletFont`] is immutable once parsed and can be shared freely between
//! threads; [`render`] is a pure function of its inputs.

mod fontdir;
mod parse;
mod render;

use std::collections::BTreeMap;
use std::path::PathBuf;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fontdir::{bundled_fonts_dir, load_font_dir, FontDiagnostic, FontSet};
pub use parse::parse_font;
pub use render::render;

/// First and last codepoint every font must define.
pub const REQUIRED_FIRST: u32 = 32;
pub const REQUIRED_LAST: u32 = 126;

/// Layout bit in the full-layout word that enables kerning.
const LAYOUT_KERN: u32 = 64;
/// Layout bit in the full-layout word that enables smushing.
const LAYOUT_SMUSH: u32 = 128;

#[derive(Debug, Error)]
pub enum FigletError {
    #[error("not a FIGlet font: header does not start with \"flf2\"")]
    BadMagic,
    #[error("malformed font header: {0}")]
    BadHeader(String),
    #[error("font is truncated: {0}")]
    TruncatedFont(String),
    #[error("glyph U+{codepoint:04X} has an unreadable row {row}")]
    InconsistentGlyphHeight { codepoint: u32, row: usize },
    #[error("font does not define required glyph U+{0:04X}")]
    MissingRequiredGlyph(u32),
    #[error("font {font:?} has no glyph for {ch:?}")]
    UnsupportedChar { ch: char, font: String },
    #[error("cannot render an empty string")]
    EmptyText,
    #[error("no parseable .flf fonts found in {}", .0.display())]
    NoFontsFound(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

bitflags! {
    /// Controlled smushing rules from the FLF layout word.
    ///
    /// An empty set together with [`LayoutMode::Smushing`] means universal
    /// smushing.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
    pub struct SmushRules: u8 {
        const EQUAL = 1;
        const LOWLINE = 2;
        const HIERARCHY = 4;
        const OPPOSITE_PAIR = 8;
        const BIG_X = 16;
        const HARDBLANK = 32;
    }
}

/// Horizontal fitting applied between adjacent glyphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LayoutMode {
    FullWidth,
    Kerning,
    Smushing { rules: SmushRules },
}

impl LayoutMode {
    pub const UNIVERSAL_SMUSHING: LayoutMode = LayoutMode::Smushing { rules: SmushRules::empty() };

    /// Decodes a full-layout word. Vertical bits are ignored.
    pub fn from_layout_word(word: u32) -> Self {
        if word & LAYOUT_SMUSH != 0 {
            LayoutMode::Smushing { rules: SmushRules::from_bits_truncate((word & 63) as u8) }
        } else if word & LAYOUT_KERN != 0 {
            LayoutMode::Kerning
        } else {
            LayoutMode::FullWidth
        }
    }

    /// The horizontal part of the full-layout word for this mode.
    pub fn layout_word(self) -> u32 {
        match self {
            LayoutMode::FullWidth => 0,
            LayoutMode::Kerning => LAYOUT_KERN,
            LayoutMode::Smushing { rules } => LAYOUT_SMUSH | u32::from(rules.bits()),
        }
    }
}

/// One character's rows with the endmarks already stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    rows: Vec<Vec<char>>,
    width: usize,
}

impl Glyph {
    pub(crate) fn new(rows: Vec<Vec<char>>) -> Self {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        Self { rows, width }
    }

    /// Widest row, in characters.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, index: usize) -> &[char] {
        &self.rows[index]
    }

    pub fn lines(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.iter().collect()).collect()
    }

    /// True when every row is empty: the font leaves this character undefined.
    pub fn is_blank(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }
}

/// A parsed FLF font.
#[derive(Debug, Clone)]
pub struct FigletFont {
    name: String,
    hardblank: char,
    height: usize,
    baseline: usize,
    max_length: usize,
    old_layout: i32,
    full_layout: Option<u32>,
    print_direction: Option<i32>,
    comment_lines: usize,
    comment: String,
    glyphs: BTreeMap<u32, Glyph>,
}

impl FigletFont {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hardblank(&self) -> char {
        self.hardblank
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn baseline(&self) -> usize {
        self.baseline
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn old_layout(&self) -> i32 {
        self.old_layout
    }

    pub fn full_layout(&self) -> Option<u32> {
        self.full_layout
    }

    pub fn print_direction(&self) -> Option<i32> {
        self.print_direction
    }

    pub fn comment_lines(&self) -> usize {
        self.comment_lines
    }

    pub fn comment(&self) -> &str {
        &self.comment
    }

    pub fn glyph(&self, ch: char) -> Option<&Glyph> {
        self.glyphs.get(&u32::from(ch))
    }

    pub fn glyphs(&self) -> impl Iterator<Item = (char, &Glyph)> {
        self.glyphs.iter().filter_map(|(cp, g)| char::from_u32(*cp).map(|c| (c, g)))
    }

    /// Whether `ch` can be rendered: inside the required ASCII range and
    /// defined with at least one non-empty row (space is always drawable).
    pub fn can_render(&self, ch: char) -> bool {
        let cp = u32::from(ch);
        if !(REQUIRED_FIRST..=REQUIRED_LAST).contains(&cp) {
            return false;
        }
        self.glyph(ch).is_some_and(|g| ch == ' ' || !g.is_blank())
    }

    /// The horizontal layout word the font asks for. Fonts without a
    /// full-layout field fall back to the old-layout conversion.
    pub fn layout_word(&self) -> u32 {
        match self.full_layout {
            Some(word) => word,
            None => match self.old_layout {
                0 => LAYOUT_KERN,
                n if n < 0 => 0,
                n => (n as u32 & 31) | LAYOUT_SMUSH,
            },
        }
    }

    pub fn default_layout(&self) -> LayoutMode {
        LayoutMode::from_layout_word(self.layout_word())
    }
}

/// Rendered multi-line art. Lines have equal length and contain no hardblanks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsciiArt {
    pub lines: Vec<String>,
    pub answer_len: usize,
    pub font_name: String,
}

impl AsciiArt {
    /// Width in characters of every line.
    pub fn width(&self) -> usize {
        self.lines.first().map_or(0, |l| l.chars().count())
    }

    pub fn height(&self) -> usize {
        self.lines.len()
    }

    /// Lines joined with `\n`, each line newline-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.lines.iter().map(|l| l.len() + 1).sum());
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
