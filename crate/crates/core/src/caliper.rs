//! Caliper mark detection and candidate-image selection.
//!
//! Calipers are found by zero-mean normalized cross-correlation against the
//! caliper template over the left `crop_ratio` of the frame width. Peaks at
//! or above `score_threshold` survive, then greedy non-maximum suppression
//! removes peaks closer than `min_center_separation` to a stronger one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::study::{ImageRef, Study};

pub const DEFAULT_CROP_RATIO: f64 = 0.87;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.945;

const TEMPLATE_SIZE: usize = 13;
const TEMPLATE_INK: u8 = 255;
const TEMPLATE_BACKGROUND: u8 = 0;

/// The `+` shaped caliper glyph stamped by the renderer: a 13x13 window
/// with one-pixel arms through the center.
pub fn caliper_template() -> Raster {
    let mut t = Raster::new(TEMPLATE_SIZE, TEMPLATE_SIZE, TEMPLATE_BACKGROUND);
    let c = TEMPLATE_SIZE / 2;
    for i in 0..TEMPLATE_SIZE {
        t.set(i, c, TEMPLATE_INK);
        t.set(c, i, TEMPLATE_INK);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn center(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaliperHit {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl CaliperHit {
    pub fn center(&self) -> (usize, usize) {
        self.bbox.center()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaliperConfig {
    pub crop_ratio: f64,
    pub score_threshold: f64,
    /// Defaults to the template width when absent.
    pub min_center_separation: Option<f64>,
    #[serde(skip, default = "caliper_template")]
    pub template: Raster,
}

impl Default for CaliperConfig {
    fn default() -> Self {
        CaliperConfig {
            crop_ratio: DEFAULT_CROP_RATIO,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            min_center_separation: None,
            template: caliper_template(),
        }
    }
}

impl CaliperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return Err(Error::validation("crop_ratio must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::validation("score_threshold must be in [0, 1]"));
        }
        if self.min_center_separation.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::validation("min_center_separation must be non-negative"));
        }
        if self.template.width() == 0 || self.template.height() == 0 {
            return Err(Error::validation("empty caliper template"));
        }
        Ok(())
    }

    pub fn separation(&self) -> f64 {
        self.min_center_separation
            .unwrap_or(self.template.width() as f64)
    }

    /// Width in pixels of the region searched, counted from the left edge.
    pub fn crop_width(&self, image_width: usize) -> usize {
        // the epsilon keeps e.g. 800 * 0.87 at 696 despite 0.87 not being exact
        ((image_width as f64 * self.crop_ratio) + 1e-9).floor() as usize
    }
}

/// Precomputed template statistics for correlation.
struct Prepared {
    w: usize,
    h: usize,
    n: i64,
    sum: i64,
    var_n: i64,
    /// Nonzero pixels as horizontal runs (row, start, end, value) ...
    hruns: Vec<(usize, usize, usize, i64)>,
    /// ... plus vertical runs (column, start, end, value) for pixels that
    /// sit alone in their row.
    vruns: Vec<(usize, usize, usize, i64)>,
}

impl Prepared {
    fn new(t: &Raster) -> Prepared {
        let (w, h) = (t.width(), t.height());
        let n = (w * h) as i64;
        let mut sum = 0i64;
        let mut sum_sq = 0i64;
        let mut hruns = Vec::new();
        let mut single = vec![false; w * h];
        for y in 0..h {
            let mut x = 0;
            while x < w {
                let v = t.get(x, y);
                let start = x;
                while x < w && t.get(x, y) == v {
                    x += 1;
                }
                let len = (x - start) as i64;
                sum += v as i64 * len;
                sum_sq += (v as i64) * (v as i64) * len;
                if v != 0 {
                    if len == 1 {
                        single[y * w + start] = true;
                    } else {
                        hruns.push((y, start, x, v as i64));
                    }
                }
            }
        }
        let mut vruns = Vec::new();
        for x in 0..w {
            let mut y = 0;
            while y < h {
                if !single[y * w + x] {
                    y += 1;
                    continue;
                }
                let v = t.get(x, y);
                let start = y;
                while y < h && single[y * w + x] && t.get(x, y) == v {
                    y += 1;
                }
                vruns.push((x, start, y, v as i64));
            }
        }
        Prepared {
            w,
            h,
            n,
            sum,
            var_n: n * sum_sq - sum * sum,
            hruns,
            vruns,
        }
    }
}

/// Positions (top-left corners) in the cropped region whose correlation
/// score is at least `floor`, with their scores, in row-major order.
fn scores_above(image: &Raster, tpl: &Prepared, crop_w: usize, floor: f64) -> Vec<(usize, usize, f64)> {
    let height = image.height();
    let mut out = Vec::new();
    if tpl.w > crop_w || tpl.h > height || tpl.var_n == 0 {
        return out;
    }
    let iw = crop_w + 1;
    // row_prefix[y * iw + x] = sum of row y over columns 0..x
    let mut row_prefix = vec![0i32; iw * height];
    // col_prefix[y * crop_w + x] = sum of column x over rows 0..y
    let mut col_prefix = vec![0i32; crop_w * (height + 1)];
    for y in 0..height {
        let row = &image.row(y)[..crop_w];
        let mut acc = 0i32;
        let (prev, next) = col_prefix.split_at_mut((y + 1) * crop_w);
        let prev = &prev[y * crop_w..];
        let rp = &mut row_prefix[y * iw..(y + 1) * iw];
        for x in 0..crop_w {
            let v = row[x] as i32;
            acc += v;
            rp[x + 1] = acc;
            next[x] = prev[x] + v;
        }
    }

    let (tw, th) = (tpl.w, tpl.h);
    let out_w = crop_w - tw + 1;
    let out_h = height - th + 1;
    let floor_sq = floor.max(0.0) * floor.max(0.0);
    let var_t = tpl.var_n as f64;
    // sums over the template-high band of rows, per column
    let mut band = vec![0i64; crop_w];
    let mut band_sq = vec![0i64; crop_w];
    for y in 0..th {
        for (x, &v) in image.row(y)[..crop_w].iter().enumerate() {
            band[x] += v as i64;
            band_sq[x] += (v as i64) * (v as i64);
        }
    }
    for y in 0..out_h {
        if y > 0 {
            let old = &image.row(y - 1)[..crop_w];
            let new = &image.row(y + th - 1)[..crop_w];
            for x in 0..crop_w {
                let (o, n) = (old[x] as i64, new[x] as i64);
                band[x] += n - o;
                band_sq[x] += n * n - o * o;
            }
        }
        let mut s: i64 = band[..tw].iter().sum();
        let mut s2: i64 = band_sq[..tw].iter().sum();
        for x in 0..out_w {
            if x > 0 {
                s += band[x + tw - 1] - band[x - 1];
                s2 += band_sq[x + tw - 1] - band_sq[x - 1];
            }
            let var_i = tpl.n * s2 - s * s;
            if var_i == 0 {
                continue;
            }
            let mut cross = 0i64;
            for &(dy, xs, xe, v) in &tpl.hruns {
                let base = (y + dy) * iw + x;
                cross += v * i64::from(row_prefix[base + xe] - row_prefix[base + xs]);
            }
            for &(dx, ys, ye, v) in &tpl.vruns {
                let col = x + dx;
                cross += v * i64::from(col_prefix[(y + ye) * crop_w + col] - col_prefix[(y + ys) * crop_w + col]);
            }
            let num = tpl.n * cross - tpl.sum * s;
            if num <= 0 {
                continue;
            }
            let numf = num as f64;
            // cheap reject before the exact comparison; the margin covers rounding
            if numf * numf < floor_sq * var_t * var_i as f64 * (1.0 - 1e-9) {
                continue;
            }
            let den_sq = tpl.var_n as i128 * var_i as i128;
            let score = if (num as i128) * (num as i128) >= den_sq {
                1.0
            } else {
                (numf / (den_sq as f64).sqrt()).min(1.0)
            };
            if score >= floor {
                out.push((x, y, score));
            }
        }
    }
    out
}

/// Correlation score of the template placed with its top-left at `(x, y)`.
pub fn score_at(image: &Raster, template: &Raster, x: usize, y: usize) -> Result<f64> {
    if x + template.width() > image.width() || y + template.height() > image.height() {
        return Err(Error::validation("template placement outside image"));
    }
    let window = image.crop(x, y, template.width(), template.height())?;
    let tpl = Prepared::new(template);
    Ok(scores_above(&window, &tpl, window.width(), 0.0)
        .first()
        .map_or(0.0, |p| p.2))
}

pub fn detect_calipers(image: &Raster, cfg: &CaliperConfig) -> Result<Vec<CaliperHit>> {
    cfg.validate()?;
    let tpl = Prepared::new(&cfg.template);
    if tpl.w > image.width() || tpl.h > image.height() {
        return Err(Error::validation(format!(
            "template {}x{} larger than image {}x{}",
            tpl.w,
            tpl.h,
            image.width(),
            image.height()
        )));
    }
    let crop_w = cfg.crop_width(image.width());
    let above = scores_above(image, &tpl, crop_w, cfg.score_threshold);
    let lookup: std::collections::HashMap<(usize, usize), f64> =
        above.iter().map(|&(x, y, s)| ((x, y), s)).collect();

    // positions missing from `lookup` score below the threshold
    let mut peaks = Vec::new();
    for &(x, y, s) in &above {
        let is_peak = (y.saturating_sub(1)..=y + 1).all(|ny| {
            (x.saturating_sub(1)..=x + 1).all(|nx| lookup.get(&(nx, ny)).map_or(true, |&n| n <= s))
        });
        if is_peak {
            peaks.push(CaliperHit {
                bbox: BoundingBox {
                    x,
                    y,
                    w: tpl.w,
                    h: tpl.h,
                },
                score: s,
            });
        }
    }
    peaks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.y.cmp(&b.bbox.y))
            .then(a.bbox.x.cmp(&b.bbox.x))
    });

    let sep = cfg.separation();
    let mut kept: Vec<CaliperHit> = Vec::new();
    for p in peaks {
        let (px, py) = p.center();
        let clear = kept.iter().all(|k| {
            let (kx, ky) = k.center();
            let dx = px as f64 - kx as f64;
            let dy = py as f64 - ky as f64;
            (dx * dx + dy * dy).sqrt() >= sep
        });
        if clear {
            kept.push(p);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image: ImageRef,
    /// Position of the frame in its study.
    pub index: usize,
    pub caliper_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSelection {
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<String>,
}

/// Frames with exactly 2 or 4 calipers, in study order. Undecodable frames
/// are skipped and reported in `diagnostics`.
pub fn select_candidate_images(study: &Study, cfg: &CaliperConfig) -> Result<CandidateSelection> {
    cfg.validate()?;
    let mut out = CandidateSelection::default();
    for (index, img) in study.images.iter().enumerate() {
        let raster = match &img.raster {
            Ok(r) => r,
            Err(e) => {
                out.diagnostics
                    .push(format!("{}: skipped undecodable frame: {e}", study.image_ref(index)));
                continue;
            }
        };
        let hits = match detect_calipers(raster, cfg) {
            Ok(h) => h,
            Err(e) => {
                out.diagnostics
                    .push(format!("{}: caliper detection failed: {e}", study.image_ref(index)));
                continue;
            }
        };
        if is_measurement_count(hits.len()) {
            out.candidates.push(Candidate {
                image: study.image_ref(index),
                index,
                caliper_count: hits.len(),
            });
        }
    }
    Ok(out)
}

/// Two calipers measure one distance, four measure two.
pub fn is_measurement_count(n: usize) -> bool {
    n == 2 || n == 4
}

/// Number of template ink pixels to relocate into the template background
/// so that an aligned copy scores as close as possible to `target`.
///
/// Moving `m` of `k` ink pixels in an `n`-pixel binary window gives a
/// correlation of `1 - m / (k (1 - k/n))`.
pub fn relocation_count_for_score(template: &Raster, target: f64) -> usize {
    let n = (template.width() * template.height()) as f64;
    let k = template.pixels().iter().filter(|&&v| v != 0).count();
    let kf = k as f64;
    let scale = kf * (1.0 - kf / n);
    let max_moves = k.min(template.pixels().len() - k);
    (0..=max_moves)
        .min_by(|&a, &b| {
            let sa = (1.0 - a as f64 / scale - target).abs();
            let sb = (1.0 - b as f64 / scale - target).abs();
            sa.total_cmp(&sb)
        })
        .unwrap_or(0)
}
