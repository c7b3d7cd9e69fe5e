//! Frame rendering: speckle texture, caliper marks, degraded look-alike
//! marks and the burned-in text band.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageSpec;
use crate::caliper::{caliper_template, relocation_count_for_score};
use crate::error::{Error, Result};
use crate::font::{GlyphFont, CELL_HEIGHT, CELL_WIDTH};
use crate::raster::Raster;
use crate::types::Site;

/// Fraction of the frame height covered by the dark text band.
const BAND_RATIO: f64 = 0.15;
/// Text sits inside the bottom 12% so every banner crop sees it whole.
const TEXT_RATIO: f64 = 0.12;
const LINE_PITCH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteStyle {
    pub texture_lo: u8,
    /// Kept below the OCR ink threshold.
    pub texture_hi: u8,
    pub text_x: usize,
}

impl SiteStyle {
    pub fn for_site(site: &Site) -> SiteStyle {
        match site {
            Site::Site2 => SiteStyle {
                texture_lo: 20,
                texture_hi: 100,
                text_x: 40,
            },
            Site::Site3 => SiteStyle {
                texture_lo: 60,
                texture_hi: 120,
                text_x: 24,
            },
            _ => SiteStyle {
                texture_lo: 40,
                texture_hi: 120,
                text_x: 16,
            },
        }
    }
}

impl Default for SiteStyle {
    fn default() -> Self {
        SiteStyle::for_site(&Site::Site1)
    }
}

/// First row of the dark text band.
pub fn band_top(height: usize) -> usize {
    height - (height as f64 * BAND_RATIO).round() as usize
}

fn text_top(height: usize) -> usize {
    height - (height as f64 * TEXT_RATIO).round() as usize + 2
}

/// Draws `text` with its top-left cell corner at (`x`, `y`). Only ink
/// pixels are written.
pub fn stamp_text(raster: &mut Raster, font: &GlyphFont, x: usize, y: usize, text: &str) -> Result<()> {
    let n = text.chars().count();
    if x + n * CELL_WIDTH > raster.width() || y + CELL_HEIGHT > raster.height() {
        return Err(Error::validation(format!(
            "text '{text}' at ({x}, {y}) overflows a {}x{} frame",
            raster.width(),
            raster.height()
        )));
    }
    for (i, ch) in text.chars().enumerate() {
        let bits = font
            .glyph(ch)
            .ok_or_else(|| Error::validation(format!("character {ch:?} not in font")))?;
        for gy in 0..CELL_HEIGHT {
            for gx in 0..CELL_WIDTH {
                if GlyphFont::bit(bits, gx, gy) {
                    raster.set(x + i * CELL_WIDTH + gx, y + gy, 255);
                }
            }
        }
    }
    Ok(())
}

/// The caliper template with `fidelity`-matched damage: ink pixels moved
/// into the background.
fn degraded_mark(fidelity: f64, rng: &mut ChaCha8Rng) -> Raster {
    let mut t = caliper_template();
    let moves = relocation_count_for_score(&t, fidelity);
    let ink: Vec<usize> = (0..t.pixels().len()).filter(|&i| t.pixels()[i] != 0).collect();
    let background: Vec<usize> = (0..t.pixels().len()).filter(|&i| t.pixels()[i] == 0).collect();
    let px = t.pixels_mut();
    for i in sample(rng, ink.len(), moves) {
        px[ink[i]] = 0;
    }
    for i in sample(rng, background.len(), moves) {
        px[background[i]] = 255;
    }
    t
}

pub fn render_image(spec: &ImageSpec, font: &GlyphFont, style: SiteStyle) -> Result<Raster> {
    let (w, h) = (spec.width, spec.height);
    if w < 64 || h < 64 {
        return Err(Error::validation(format!("frame {}x{} too small", w, h)));
    }
    let band = band_top(h);
    for &(x, y) in &spec.calipers {
        let (x, y) = (x as usize, y as usize);
        if x < 6 || y < 6 || x + 7 > w || y + 7 > band {
            return Err(Error::validation(format!(
                "caliper at ({x}, {y}) outside the {w}x{h} frame"
            )));
        }
    }
    let (lo, hi) = (style.texture_lo, style.texture_hi.max(style.texture_lo));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed);
    let mut pixels = vec![0u8; w * h];
    for p in &mut pixels[..band * w] {
        *p = rng.gen_range(lo..=hi);
    }
    let mut raster = Raster::from_pixels(w, h, pixels)?;

    let template = caliper_template();
    for &(x, y) in &spec.calipers {
        raster.blit(&template, i64::from(x) - 6, i64::from(y) - 6);
    }
    for d in &spec.distractors {
        let mark = degraded_mark(d.fidelity, &mut rng);
        raster.blit(&mark, i64::from(d.x) - 6, i64::from(d.y) - 6);
    }

    let top = text_top(h);
    if !spec.banner_text.is_empty() {
        stamp_text(&mut raster, font, style.text_x, top, &spec.banner_text)?;
    }
    if let Some(m) = &spec.measurement_text {
        stamp_text(&mut raster, font, style.text_x, top + LINE_PITCH, m)?;
    }
    Ok(raster)
}
