use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_challenge, rasterize, ChallengeError, GenConfig, RasterSpec};
use crate::figlet::FigletFont;
use crate::rng::{rng_for, RNG_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Timing sidecar. Kept apart from the manifest so that two runs with the
/// same inputs produce identical manifests apart from `created_at`.
pub const COSTS_FILE: &str = "costs.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub answer: String,
    pub font_name: String,
    /// Relative to the dataset directory.
    pub text_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub rng: String,
    pub seed: u64,
    pub config: GenConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster: Option<RasterSpec>,
    pub fonts: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn read_text(&self, root: &Path, entry: &ManifestEntry) -> Result<String, ChallengeError> {
        let path = root.join(&entry.text_path);
        fs::read_to_string(&path).map_err(|source| ChallengeError::Io { path, source })
    }

    pub fn read_image(&self, root: &Path, entry: &ManifestEntry) -> Result<Option<Vec<u8>>, ChallengeError> {
        let Some(rel) = &entry.image_path else {
            return Ok(None);
        };
        let path = root.join(rel);
        fs::read(&path).map(Some).map_err(|source| ChallengeError::Io { path, source })
    }
}

/// Per-sample wall-clock generation timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCosts {
    pub samples: usize,
    /// Answer drawing plus FIGlet rendering, per sample.
    pub text_seconds: Vec<f64>,
    /// Rasterization, per sample; empty without images.
    pub image_seconds: Vec<f64>,
    pub mean_text_seconds: f64,
    pub mean_image_seconds: Option<f64>,
    /// Whole run including file output.
    pub wall_seconds: f64,
}

impl DatasetCosts {
    /// Mean generation cost per challenge, images included when present.
    pub fn mean_generation_seconds(&self) -> f64 {
        self.mean_text_seconds + self.mean_image_seconds.unwrap_or(0.0)
    }

    pub fn load(dir: &Path) -> Result<Self, ChallengeError> {
        read_json(&dir.join(COSTS_FILE))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ChallengeError> {
    let raw = fs::read(path).map_err(|source| ChallengeError::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_slice(&raw)?)
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<(), ChallengeError> {
    fs::write(&path, bytes).map_err(|source| ChallengeError::Io { path, source })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Reads `<dir>/manifest.json`, or the file itself if `path` is a file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ChallengeError> {
    if path.is_dir() {
        read_json(&path.join(MANIFEST_FILE))
    } else {
        read_json(path)
    }
}

/// Generates `n` challenges into `out_dir` and writes the manifest and the
/// timing sidecar. Challenge `i` uses stream `i` of `config.seed`.
pub fn generate_dataset(
    n: usize,
    fonts: &[FigletFont],
    config: &GenConfig,
    out_dir: &Path,
    image: Option<&RasterSpec>,
) -> Result<DatasetManifest, ChallengeError> {
    if n == 0 {
        return Err(ChallengeError::InvalidConfig("dataset size must be at least 1".into()));
    }
    config.check_fonts(fonts)?;
    let started = Instant::now();

    let text_dir = out_dir.join("text");
    let img_dir = out_dir.join("img");
    for dir in std::iter::once(&text_dir).chain(image.map(|_| &img_dir)) {
        fs::create_dir_all(dir).map_err(|source| ChallengeError::Io { path: dir.clone(), source })?;
    }

    let results: Vec<(ManifestEntry, f64, Option<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(config.seed, i as u64);
            let t0 = Instant::now();
            let challenge = generate_challenge(&mut rng, fonts, config, None)?;
            let text_secs = t0.elapsed().as_secs_f64();

            let text_path = format!("text/{}.txt", challenge.id);
            write_file(out_dir.join(&text_path), challenge.art.to_text().as_bytes())?;

            let mut image_path = None;
            let mut image_secs = None;
            if let Some(spec) = image {
                let t1 = Instant::now();
                let png = rasterize(&challenge.art, spec)?;
                image_secs = Some(t1.elapsed().as_secs_f64());
                let rel = format!("img/{}.png", challenge.id);
                write_file(out_dir.join(&rel), &png)?;
                image_path = Some(rel);
            }

            let entry = ManifestEntry {
                id: challenge.id,
                answer: challenge.answer,
                font_name: challenge.font_name,
                text_path,
                image_path,
            };
            Ok((entry, text_secs, image_secs))
        })
        .collect::<Result<_, ChallengeError>>()?;

    let mut seen = HashSet::with_capacity(n);
    for (entry, _, _) in &results {
        if !seen.insert(entry.id.as_str()) {
            return Err(ChallengeError::DuplicateId(entry.id.clone()));
        }
    }

    let text_seconds: Vec<f64> = results.iter().map(|r| r.1).collect();
    let image_seconds: Vec<f64> = results.iter().filter_map(|r| r.2).collect();
    let manifest = DatasetManifest {
        version: 1,
        rng: RNG_VERSION.into(),
        seed: config.seed,
        config: config.clone(),
        raster: image.copied(),
        fonts: fonts.iter().map(|f| f.name().to_owned()).collect(),
        created_at: Utc::now(),
        entries: results.into_iter().map(|r| r.0).collect(),
    };
    write_file(out_dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;

    let costs = DatasetCosts {
        samples: n,
        mean_text_seconds: mean(&text_seconds),
        mean_image_seconds: (!image_seconds.is_empty()).then(|| mean(&image_seconds)),
        text_seconds,
        image_seconds,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_file(out_dir.join(COSTS_FILE), &serde_json::to_vec_pretty(&costs)?)?;

    tracing::info!(n, dir = %out_dir.display(), "dataset written");
    Ok(manifest)
}
