//! Binary PPM (P6) codec. Decoding accepts any maxval up to 65535; encoding
//! always writes 8-bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{image_dims, TensorF};

/// Upper bound on decoded pixel count, so a hostile header cannot request a
/// huge allocation.
pub const MAX_PIXELS: usize = 1 << 24;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("ppm", format!("missing {field}")));
        }
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        digits
            .parse()
            .map_err(|_| Error::format("ppm", format!("{field} out of range")))
    }
}

/// Decodes a P6 image into a `[3, h, w]` tensor with values in `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<TensorF> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::format("ppm", "missing P6 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("ppm", "zero dimension"));
    }
    if width.checked_mul(height).is_none_or(|n| n > MAX_PIXELS) {
        return Err(Error::format("ppm", format!("{width}x{height} exceeds size limit")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("ppm", format!("maxval {maxval} not in 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format("ppm", "missing raster separator")),
    }
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let pixels = width * height;
    let need = pixels * 3 * bytes_per_sample;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(Error::format(
            "ppm",
            format!("raster truncated: need {need} bytes, have {}", raster.len()),
        ));
    }
    let scale = maxval as f32;
    let sample = |i: usize| -> Result<f32> {
        let v = if bytes_per_sample == 1 {
            raster[i] as usize
        } else {
            (raster[2 * i] as usize) << 8 | raster[2 * i + 1] as usize
        };
        if v > maxval {
            return Err(Error::format("ppm", format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(v as f32 / scale)
    };
    // Interleaved RGB to planar CHW.
    let mut data = vec![0.0f32; pixels * 3];
    for p in 0..pixels {
        for c in 0..3 {
            data[c * pixels + p] = sample(p * 3 + c)?;
        }
    }
    TensorF::new(vec![3, height, width], data)
}

/// Encodes a `[3, h, w]` tensor as 8-bit P6, rounding to the nearest level.
pub fn encode(image: &TensorF) -> Result<Vec<u8>> {
    let (c, h, w) = image_dims(image)?;
    if c != 3 {
        return Err(Error::Shape {
            expected: vec![3, h, w],
            actual: image.shape().to_vec(),
        });
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let data = image.data();
    out.reserve(plane * 3);
    for p in 0..plane {
        for ch in 0..3 {
            out.push(quantize(data[ch * plane + p]));
        }
    }
    Ok(out)
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds every value to the nearest 8-bit level, as writing and reading
/// back a PPM would.
pub fn quantize_in_place(image: &mut TensorF) {
    for v in image.data_mut() {
        *v = quantize(*v) as f32 / 255.0;
    }
}

pub fn read(path: &Path) -> Result<TensorF> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}

pub fn write(path: &Path, image: &TensorF) -> Result<()> {
    let bytes = encode(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
