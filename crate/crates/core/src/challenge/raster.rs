use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use spleen_font::FONT_8X16;

use super::ChallengeError;
use crate::figlet::AsciiArt;

const ATLAS_W: usize = 8;
const ATLAS_H: usize = 16;
const INK: u8 = 0;
const PAPER: u8 = 255;

/// Cell geometry and limits for [`rasterize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSpec {
    pub cell_width: u32,
    pub cell_height: u32,
    /// Integer pixel multiplier applied to every cell.
    pub scale: u32,
    /// Largest allowed width or height in pixels.
    pub max_dimension: u32,
}

impl Default for RasterSpec {
    fn default() -> Self {
        Self { cell_width: ATLAS_W as u32, cell_height: ATLAS_H as u32, scale: 1, max_dimension: 8192 }
    }
}

/// Bitmap for one character at atlas resolution, row-major.
type Bitmap = [bool; ATLAS_W * ATLAS_H];

/// Spleen 8x16 ships as PSF1: a 4-byte header (magic, mode, bytes per
/// glyph) followed by 16-byte glyphs indexed by codepoint for ASCII.
const PSF1_HEADER: usize = 4;

fn lookup(ch: char) -> Bitmap {
    let mut bits = [false; ATLAS_W * ATLAS_H];
    if ch == ' ' {
        return bits;
    }
    let cp = if (33..=126).contains(&u32::from(ch)) { u32::from(ch) } else { u32::from('?') } as usize;
    let glyph = &FONT_8X16[PSF1_HEADER + cp * ATLAS_H..][..ATLAS_H];
    for (y, byte) in glyph.iter().enumerate() {
        for x in 0..ATLAS_W {
            bits[y * ATLAS_W + x] = byte & (0x80 >> x) != 0;
        }
    }
    bits
}

/// Draws `art` as a grayscale PNG: dark glyphs on a light background with a
/// one-cell margin. Output bytes are a pure function of the inputs.
pub fn rasterize(art: &AsciiArt, spec: &RasterSpec) -> Result<Vec<u8>, ChallengeError> {
    let rows: Vec<Vec<char>> = art.lines.iter().map(|l| l.chars().collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(ChallengeError::EmptyArt);
    }
    if spec.cell_width == 0 || spec.cell_height == 0 || spec.scale == 0 {
        return Err(ChallengeError::InvalidConfig("cell size and scale must be positive".into()));
    }

    let cell_w = u64::from(spec.cell_width) * u64::from(spec.scale);
    let cell_h = u64::from(spec.cell_height) * u64::from(spec.scale);
    let width = (cols as u64 + 2) * cell_w;
    let height = (rows.len() as u64 + 2) * cell_h;
    let cap = u64::from(spec.max_dimension);
    if width > cap || height > cap {
        return Err(ChallengeError::OversizeImage { width, height, cap: spec.max_dimension });
    }
    let (width, height, cell_w, cell_h) = (width as usize, height as usize, cell_w as usize, cell_h as usize);

    let mut atlas: HashMap<char, Bitmap> = HashMap::new();
    let mut pixels = vec![PAPER; width * height];

    for (r, row) in rows.iter().enumerate() {
        for (c, &ch) in row.iter().enumerate() {
            if ch == ' ' {
                continue;
            }
            let bits = *atlas.entry(ch).or_insert_with(|| lookup(ch));
            let x0 = (c + 1) * cell_w;
            let y0 = (r + 1) * cell_h;
            for dy in 0..cell_h {
                let sy = dy * ATLAS_H / cell_h;
                let line = &mut pixels[(y0 + dy) * width + x0..][..cell_w];
                for (dx, px) in line.iter_mut().enumerate() {
                    let sx = dx * ATLAS_W / cell_w;
                    if bits[sy * ATLAS_W + sx] {
                        *px = INK;
                    }
                }
            }
        }
    }

    encode_png(&pixels, width as u32, height as u32)
}

fn encode_png(pixels: &[u8], width: u32, height: u32) -> Result<Vec<u8>, ChallengeError> {
    let png_err = |e: png::EncodingError| ChallengeError::Png(e.to_string());
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Fast);
    encoder.set_filter(png::Filter::NoFilter);
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}
