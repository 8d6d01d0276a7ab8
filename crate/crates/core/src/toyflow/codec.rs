//! Lossless-to-1e-6 image encoding of 2D toy samples.
//!
//! Each sample becomes a 32×32 8-bit grayscale PNG. Pixels are numbered in
//! row-major order starting at the top-left corner.
//!
//! | pixels  | content                                                     |
//! |---------|-------------------------------------------------------------|
//! | 0..8    | `round(x · 10⁶)` as a little-endian two's-complement `i64`  |
//! | 8..16   | `round(y · 10⁶)`, same layout                               |
//! | 16..32  | zero                                                        |
//! | 32..    | preview: background 16, a 255-valued dot at the sample      |
//!
//! The preview maps `(x, y)` to column `16 + 2x` and row `16 − 2y`, clamped
//! to rows 1..=31, and lights every pixel within 1.5 px of that point. It is
//! never read back.

use std::io::Cursor;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::field::Point;
use crate::error::{Error, Result};

pub const SIDE: u32 = 32;
pub const FIXED_POINT_SCALE: f64 = 1e6;

const BACKGROUND: u8 = 16;
const DOT: u8 = 255;

fn to_fixed(v: f64) -> Result<i64> {
    let scaled = (v * FIXED_POINT_SCALE).round();
    // i64::MAX as f64 rounds up to 2^63, so the upper bound is exclusive
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if !(-LIMIT..LIMIT).contains(&scaled) {
        return Err(Error::InvalidInput(format!("cannot encode coordinate {v}")));
    }
    Ok(scaled as i64)
}

pub fn quantize(p: Point) -> Result<Point> {
    Ok([
        to_fixed(p[0])? as f64 / FIXED_POINT_SCALE,
        to_fixed(p[1])? as f64 / FIXED_POINT_SCALE,
    ])
}

pub fn encode_pixels(p: Point) -> Result<Vec<u8>> {
    let side = SIDE as usize;
    let mut px = vec![0u8; side * side];
    px[..8].copy_from_slice(&to_fixed(p[0])?.to_le_bytes());
    px[8..16].copy_from_slice(&to_fixed(p[1])?.to_le_bytes());

    let cx = (16.0 + 2.0 * p[0]).clamp(0.0, 31.0);
    let cy = (16.0 - 2.0 * p[1]).clamp(1.0, 31.0);
    for row in 1..side {
        for col in 0..side {
            let d2 = (col as f64 - cx).powi(2) + (row as f64 - cy).powi(2);
            px[row * side + col] = if d2 <= 2.25 { DOT } else { BACKGROUND };
        }
    }
    Ok(px)
}

pub fn encode_png(p: Point) -> Result<Vec<u8>> {
    let px = encode_pixels(p)?;
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&px, SIDE, SIDE, ExtendedColorType::L8)
        .map_err(|e| Error::InvalidInput(format!("png encoding failed: {e}")))?;
    Ok(out)
}

pub fn decode_pixels(px: &[u8]) -> Result<Point> {
    if px.len() < 16 {
        return Err(Error::InvalidInput("toy image too small".into()));
    }
    let x = i64::from_le_bytes(px[..8].try_into().expect("8 bytes"));
    let y = i64::from_le_bytes(px[8..16].try_into().expect("8 bytes"));
    Ok([x as f64 / FIXED_POINT_SCALE, y as f64 / FIXED_POINT_SCALE])
}

pub fn decode_png(bytes: &[u8]) -> Result<Point> {
    let img = image::load(Cursor::new(bytes), ImageFormat::Png)
        .map_err(|e| Error::InvalidInput(format!("not a png: {e}")))?;
    let luma = img
        .as_luma8()
        .ok_or_else(|| Error::InvalidInput("toy image must be 8-bit grayscale".into()))?;
    if luma.dimensions() != (SIDE, SIDE) {
        return Err(Error::InvalidInput(format!(
            "toy image must be {SIDE}×{SIDE}, got {:?}",
            luma.dimensions()
        )));
    }
    decode_pixels(luma.as_raw())
}
