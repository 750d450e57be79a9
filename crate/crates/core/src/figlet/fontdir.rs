use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{parse_font, FigletError, FigletFont};

/// A font file that was skipped while loading a directory.
#[derive(Debug, Clone, Serialize)]
pub struct FontDiagnostic {
    pub path: PathBuf,
    pub error: String,
}

/// Fonts loaded from a directory, sorted by name.
#[derive(Debug, Clone, Default)]
pub struct FontSet {
    pub fonts: Vec<FigletFont>,
    pub diagnostics: Vec<FontDiagnostic>,
}

impl FontSet {
    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FigletFont> {
        self.fonts.iter().find(|f| f.name() == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.fonts.iter().map(FigletFont::name).collect()
    }
}

/// Directory holding the fonts shipped with this crate.
pub fn bundled_fonts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fonts")
}

/// Loads every `*.flf` file in `dir` (not recursive).
///
/// Files that fail to parse are reported in [`FontSet::diagnostics`] rather
/// than aborting the load. The font name is the file stem.
pub fn load_font_dir(dir: &Path) -> Result<FontSet, FigletError> {
    let io_err = |source| FigletError::Io { path: dir.to_path_buf(), source };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_flf = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("flf"));
        if is_flf && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let mut set = FontSet::default();
    for path in paths {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let parsed = fs::read(&path)
            .map_err(|source| FigletError::Io { path: path.clone(), source })
            .and_then(|raw| parse_font(&raw));
        match parsed {
            Ok(font) => set.fonts.push(font.with_name(name)),
            Err(err) => {
                tracing::warn!(path = %path.display(), %err, "skipping font");
                set.diagnostics.push(FontDiagnostic { path, error: err.to_string() });
            }
        }
    }
    if set.fonts.is_empty() {
        return Err(FigletError::NoFontsFound(dir.to_path_buf()));
    }
    set.fonts.sort_by(|a, b| a.name().cmp(b.name()));
    Ok(set)
}
