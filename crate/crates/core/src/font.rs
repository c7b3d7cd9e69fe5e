//! Fixed-pitch 8x16 bitmap font shared by the image renderer and the OCR.
//!
//! The font ships as a binary glyph atlas (`assets/font8x16.gfnt`):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `GFNT`                            |
//! | 4      | 1    | version, currently 1                    |
//! | 5      | 1    | cell width in pixels (8)                |
//! | 6      | 1    | cell height in pixels (16)              |
//! | 7      | 1    | reserved, 0                             |
//! | 8      | 2    | glyph count, little endian              |
//! | 10     | 17*n | glyph records                           |
//!
//! A glyph record is one ASCII code byte followed by 16 row bytes, top row
//! first, most significant bit = leftmost pixel. Set bits are ink.

use crate::error::{Error, Result};

pub const CELL_WIDTH: usize = 8;
pub const CELL_HEIGHT: usize = 16;
pub const CELL_PIXELS: u32 = (CELL_WIDTH * CELL_HEIGHT) as u32;

const DEFAULT_ATLAS: &[u8] = include_bytes!("../assets/font8x16.gfnt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub ch: char,
    /// Row-major cell bitmap, row 0 in the most significant byte.
    pub bits: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphFont {
    glyphs: Vec<Glyph>,
}

impl GlyphFont {
    pub fn from_atlas(bytes: &[u8]) -> Result<GlyphFont> {
        let bad = |msg: &str| Error::validation(format!("glyph atlas: {msg}"));
        if bytes.len() < 10 || &bytes[..4] != b"GFNT" {
            return Err(bad("missing GFNT header"));
        }
        if bytes[4] != 1 {
            return Err(bad("unsupported version"));
        }
        if bytes[5] as usize != CELL_WIDTH || bytes[6] as usize != CELL_HEIGHT {
            return Err(bad("only 8x16 cells are supported"));
        }
        let count = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let record = 1 + CELL_HEIGHT;
        if bytes.len() != 10 + count * record {
            return Err(bad("length does not match glyph count"));
        }
        let mut glyphs = Vec::with_capacity(count);
        for rec in bytes[10..].chunks_exact(record) {
            let ch = rec[0] as char;
            if glyphs.iter().any(|g: &Glyph| g.ch == ch) {
                return Err(bad("duplicate glyph"));
            }
            let mut rows = [0u8; CELL_HEIGHT];
            rows.copy_from_slice(&rec[1..]);
            glyphs.push(Glyph {
                ch,
                bits: u128::from_be_bytes(rows),
            });
        }
        if !glyphs.iter().any(|g| g.ch == ' ') {
            return Err(bad("font needs a space glyph"));
        }
        Ok(GlyphFont { glyphs })
    }

    pub fn glyphs(&self) -> &[Glyph] {
        &self.glyphs
    }

    pub fn glyph(&self, ch: char) -> Option<u128> {
        self.glyphs.iter().find(|g| g.ch == ch).map(|g| g.bits)
    }

    pub fn supports(&self, text: &str) -> bool {
        text.chars().all(|c| self.glyph(c).is_some())
    }

    /// Pixel `(x, y)` of a cell bitmap.
    #[inline]
    pub fn bit(bits: u128, x: usize, y: usize) -> bool {
        (bits >> (127 - (y * CELL_WIDTH + x))) & 1 == 1
    }
}

impl Default for GlyphFont {
    fn default() -> Self {
        GlyphFont::from_atlas(DEFAULT_ATLAS).expect("bundled glyph atlas is valid")
    }
}
