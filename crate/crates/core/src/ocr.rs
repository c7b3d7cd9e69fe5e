//! Text extraction from the bottom banner of ultrasound frames.
//!
//! Five bottom-band crops are read with a fixed-pitch glyph classifier, and
//! the crop whose text yields the most nodule descriptors wins. The same
//! bands also carry caliper distance readouts such as `D1 1.63CM`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::{GlyphFont, CELL_HEIGHT, CELL_PIXELS, CELL_WIDTH};
use crate::raster::Raster;
use crate::types::{Laterality, View};

/// Bottom-band heights, as fractions of frame height, tried in this order.
pub const CROP_CONFIGS: [f64; 5] = [0.15, 0.18, 0.20, 0.12, 0.25];

/// Cells whose best glyph agrees on fewer pixels than this read as `?`.
pub const AGREEMENT_FLOOR: f64 = 0.8;

const INK_THRESHOLD: u8 = 128;
/// Blank rows tolerated inside one text line (e.g. the gap in `:`).
const MAX_LINE_GAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BannerInfo {
    pub view: View,
    pub laterality: Option<Laterality>,
    pub location: Option<String>,
    pub label: Option<String>,
    pub raw_text: String,
    pub config_index: usize,
}

impl BannerInfo {
    pub fn populated_fields(&self) -> usize {
        usize::from(self.view != View::Unknown)
            + usize::from(self.laterality.is_some())
            + usize::from(self.location.is_some())
            + usize::from(self.label.is_some())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub values_cm: Vec<f64>,
}

pub fn crop_height(image_height: usize, config_index: usize) -> Result<usize> {
    let ratio = *CROP_CONFIGS
        .get(config_index)
        .ok_or_else(|| Error::validation(format!("crop config {config_index} out of range 0..5")))?;
    let h = (image_height as f64 * ratio).round() as usize;
    if h == 0 || h > image_height {
        return Err(Error::validation(format!(
            "crop config {config_index} gives {h} rows for a {image_height}-row image"
        )));
    }
    Ok(h)
}

/// Bottom band of `image` for the given crop configuration.
pub fn crop_banner(image: &Raster, config_index: usize) -> Result<Raster> {
    let h = crop_height(image.height(), config_index)?;
    image.crop(0, image.height() - h, image.width(), h)
}

struct InkMap {
    width: usize,
    height: usize,
    ink: Vec<bool>,
}

impl InkMap {
    fn new(band: &Raster) -> InkMap {
        InkMap {
            width: band.width(),
            height: band.height(),
            ink: band.pixels().iter().map(|&v| v >= INK_THRESHOLD).collect(),
        }
    }

    #[inline]
    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.ink[y as usize * self.width + x as usize]
    }

    fn cell(&self, x0: i64, y0: i64) -> u128 {
        let mut bits = 0u128;
        for dy in 0..CELL_HEIGHT as i64 {
            for dx in 0..CELL_WIDTH as i64 {
                bits <<= 1;
                if self.at(x0 + dx, y0 + dy) {
                    bits |= 1;
                }
            }
        }
        bits
    }

    fn row_has_ink(&self, y: usize) -> bool {
        self.ink[y * self.width..(y + 1) * self.width].iter().any(|&b| b)
    }

    fn ink_columns(&self, y0: i64, y1: i64) -> Option<(i64, i64)> {
        let mut lo = None;
        let mut hi = None;
        for y in y0.max(0)..y1.min(self.height as i64) {
            for x in 0..self.width {
                if self.ink[y as usize * self.width + x] {
                    lo = Some(lo.map_or(x as i64, |l: i64| l.min(x as i64)));
                    hi = Some(hi.map_or(x as i64, |h: i64| h.max(x as i64)));
                }
            }
        }
        Some((lo?, hi?))
    }
}

fn best_glyph(font: &GlyphFont, cell: u128) -> (char, u32) {
    let mut best = (' ', u32::MAX);
    for g in font.glyphs() {
        let d = (g.bits ^ cell).count_ones();
        if d < best.1 {
            best = (g.ch, d);
        }
    }
    best
}

/// Grid origin for the cell containing column `x` at horizontal phase `phase`.
fn grid_start(x: i64, phase: i64) -> i64 {
    x - (x - phase).rem_euclid(CELL_WIDTH as i64)
}

fn read_line(map: &InkMap, font: &GlyphFont, y_candidates: std::ops::RangeInclusive<i64>) -> (String, i64) {
    let Some((x_lo, x_hi)) = map.ink_columns(*y_candidates.start(), *y_candidates.end() + CELL_HEIGHT as i64)
    else {
        return (String::new(), *y_candidates.start());
    };
    let mut best: Option<(u64, i64, i64)> = None;
    for y0 in y_candidates.clone() {
        for phase in 0..CELL_WIDTH as i64 {
            let mut cost = 0u64;
            let mut x = grid_start(x_lo, phase);
            while x <= x_hi {
                cost += best_glyph(font, map.cell(x, y0)).1 as u64;
                x += CELL_WIDTH as i64;
            }
            if best.map_or(true, |(c, _, _)| cost < c) {
                best = Some((cost, y0, phase));
            }
        }
    }
    let (_, y0, phase) = best.expect("at least one candidate");
    let mut text = String::new();
    let mut x = grid_start(x_lo, phase);
    while x <= x_hi {
        let (ch, d) = best_glyph(font, map.cell(x, y0));
        let agreement = 1.0 - d as f64 / CELL_PIXELS as f64;
        text.push(if agreement < AGREEMENT_FLOOR { '?' } else { ch });
        x += CELL_WIDTH as i64;
    }
    (text.trim().to_string(), y0)
}

/// Reads every text line in `band`, top to bottom, joined by newlines.
pub fn ocr_text(band: &Raster, font: &GlyphFont) -> String {
    let map = InkMap::new(band);
    let mut lines = Vec::new();
    let mut y = 0usize;
    while y < map.height {
        if !map.row_has_ink(y) {
            y += 1;
            continue;
        }
        let start = y;
        let mut end = y;
        let mut probe = y + 1;
        while probe < map.height && probe <= end + MAX_LINE_GAP + 1 {
            if map.row_has_ink(probe) {
                end = probe;
            }
            probe += 1;
        }
        let (start_i, end_i) = (start as i64, end as i64);
        let cell_h = CELL_HEIGHT as i64;
        let (text, y0) = if end_i - start_i < cell_h {
            read_line(&map, font, (end_i - cell_h + 1)..=start_i)
        } else {
            // taller than one cell: read the top line, then continue below it
            read_line(&map, font, (start_i - 2)..=start_i)
        };
        if !text.is_empty() {
            lines.push(text);
        }
        let next = (y0 + cell_h).max(start_i + 1) as usize;
        y = if end_i - start_i < cell_h { end + 1 } else { next };
    }
    lines.join("\n")
}

fn view_token(t: &str) -> Option<View> {
    match t {
        "TRANS" | "TRV" | "TRANSVERSE" | "TRNS" => Some(View::Transverse),
        "SAG" | "SAGITTAL" | "LONG" | "LONGITUDINAL" | "LON" => Some(View::Longitudinal),
        _ => None,
    }
}

fn laterality_token(t: &str) -> Option<Laterality> {
    match t {
        "RT" | "RIGHT" | "R" => Some(Laterality::Right),
        "LT" | "LEFT" | "L" => Some(Laterality::Left),
        "ISTHMUS" | "ISTH" => Some(Laterality::Isthmus),
        _ => None,
    }
}

fn location_token(t: &str) -> Option<&'static str> {
    Some(match t {
        "SUP" | "SUPERIOR" => "superior",
        "INF" | "INFERIOR" => "inferior",
        "ANT" | "ANTERIOR" => "anterior",
        "POST" | "POSTERIOR" => "posterior",
        "MID" | "MIDDLE" => "mid",
        "LAT" | "LATERAL" => "lateral",
        "MED" | "MEDIAL" => "medial",
        "UPPER" | "UP" => "upper",
        "LOWER" | "LO" => "lower",
        _ => return None,
    })
}

fn label_token(t: &str) -> Option<String> {
    let digits = t.strip_prefix('#')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    Some(format!("#{n}"))
}

/// Token-table parse of banner text; the first token of each kind wins.
pub fn parse_banner(text: &str) -> BannerInfo {
    let mut info = BannerInfo {
        view: View::Unknown,
        laterality: None,
        location: None,
        label: None,
        raw_text: text.to_string(),
        config_index: 0,
    };
    for raw in text.split(|c: char| c.is_whitespace() || c == ',' || c == ':') {
        let tok = raw.to_ascii_uppercase();
        if tok.is_empty() {
            continue;
        }
        if let Some(v) = view_token(&tok) {
            if info.view == View::Unknown {
                info.view = v;
            }
        } else if let Some(l) = laterality_token(&tok) {
            info.laterality.get_or_insert(l);
        } else if let Some(loc) = location_token(&tok) {
            info.location.get_or_insert_with(|| loc.to_string());
        } else if let Some(label) = label_token(&tok) {
            info.label.get_or_insert(label);
        }
    }
    info
}

fn measurement_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:^|[^\d.])(\d+(?:\.\d+)?)\s*(cm|mm)\b").expect("valid regex")
    })
}

/// Distances with an explicit `cm`/`mm` unit, normalized to centimeters
/// at two-decimal precision. Values outside (0, 20) cm are dropped.
pub fn parse_image_measurements(text: &str) -> MeasurementSet {
    let mut values_cm = Vec::new();
    for cap in measurement_regex().captures_iter(text) {
        let Ok(v) = cap[1].parse::<f64>() else {
            continue;
        };
        let cm = if cap[2].eq_ignore_ascii_case("mm") { v / 10.0 } else { v };
        let cm = (cm * 100.0).round() / 100.0;
        if cm > 0.0 && cm < 20.0 {
            values_cm.push(cm);
        }
    }
    MeasurementSet { values_cm }
}

/// OCR output of one frame under every crop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageText {
    /// Raw text per crop configuration; `None` where the crop was invalid.
    pub texts: Vec<Option<String>>,
}

impl ImageText {
    pub fn read(image: &Raster, font: &GlyphFont) -> ImageText {
        let texts = (0..CROP_CONFIGS.len())
            .map(|i| crop_banner(image, i).ok().map(|band| ocr_text(&band, font)))
            .collect();
        ImageText { texts }
    }

    /// Parse with the most populated fields; ties go to the lowest index.
    pub fn banner(&self) -> BannerInfo {
        let mut best: Option<BannerInfo> = None;
        for (i, text) in self.texts.iter().enumerate() {
            let Some(text) = text else { continue };
            let mut info = parse_banner(text);
            info.config_index = i;
            if best
                .as_ref()
                .map_or(true, |b| info.populated_fields() > b.populated_fields())
            {
                best = Some(info);
            }
        }
        best.unwrap_or_else(|| parse_banner(""))
    }

    /// Measurement parse with the most values; ties go to the lowest index.
    pub fn measurements(&self) -> MeasurementSet {
        let mut best = MeasurementSet::default();
        let mut found = false;
        for text in self.texts.iter().flatten() {
            let ms = parse_image_measurements(text);
            if !found || ms.values_cm.len() > best.values_cm.len() {
                best = ms;
                found = true;
            }
        }
        best
    }
}

pub fn read_banner(image: &Raster, font: &GlyphFont) -> BannerInfo {
    ImageText::read(image, font).banner()
}

pub fn read_measurements(image: &Raster, font: &GlyphFont) -> MeasurementSet {
    ImageText::read(image, font).measurements()
}
