//! Image processing operators used for augmentation and robustness sweeps.
//! All operators map `[0, 1]` images to `[0, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::ppm::quantize_in_place;
use crate::error::{Error, Result};
use crate::tensor::{image_dims, TensorF};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum ProcessingOp {
    /// Block-DCT quantization approximating JPEG at quality 1..=100.
    JpegLike(u8),
    GaussianBlur(f64),
    Brightness(f64),
    Contrast(f64),
    Saturation(f64),
}

/// Largest accepted blur sigma or color factor.
pub const MAX_PARAM: f64 = 10.0;

impl ProcessingOp {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ProcessingOp::JpegLike(q) => (1..=100).contains(&q),
            ProcessingOp::GaussianBlur(s)
            | ProcessingOp::Brightness(s)
            | ProcessingOp::Contrast(s)
            | ProcessingOp::Saturation(s) => s.is_finite() && (0.0..=MAX_PARAM).contains(&s),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid processing parameter: {self}")))
        }
    }

    /// Default robustness sweep grid.
    pub fn sweep() -> Vec<ProcessingOp> {
        let mut ops = Vec::new();
        ops.extend([90, 80, 70, 60].map(ProcessingOp::JpegLike));
        for f in [0.6, 0.8, 1.0, 1.2, 1.4] {
            ops.extend([
                ProcessingOp::Brightness(f),
                ProcessingOp::Contrast(f),
                ProcessingOp::Saturation(f),
            ]);
        }
        ops.extend([0.5, 1.0, 1.5].map(ProcessingOp::GaussianBlur));
        ops
    }
}

impl fmt::Display for ProcessingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProcessingOp::JpegLike(q) => write!(f, "jpeg={q}"),
            ProcessingOp::GaussianBlur(s) => write!(f, "blur={s}"),
            ProcessingOp::Brightness(v) => write!(f, "brightness={v}"),
            ProcessingOp::Contrast(v) => write!(f, "contrast={v}"),
            ProcessingOp::Saturation(v) => write!(f, "saturation={v}"),
        }
    }
}

/// Parses `<op>=<param>`, e.g. `blur=1.0` or `jpeg=80`.
impl FromStr for ProcessingOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("processing op", format!("expected <op>=<param>, got {s:?}"));
        let (name, param) = s.split_once('=').ok_or_else(bad)?;
        let float = || param.trim().parse::<f64>().map_err(|_| bad());
        let op = match name.trim() {
            "jpeg" | "jpeg_like" => ProcessingOp::JpegLike(param.trim().parse().map_err(|_| bad())?),
            "blur" | "gaussian_blur" => ProcessingOp::GaussianBlur(float()?),
            "brightness" => ProcessingOp::Brightness(float()?),
            "contrast" => ProcessingOp::Contrast(float()?),
            "saturation" => ProcessingOp::Saturation(float()?),
            _ => return Err(bad()),
        };
        op.validate()?;
        Ok(op)
    }
}

pub fn process_image(x: &TensorF, op: ProcessingOp) -> Result<TensorF> {
    op.validate()?;
    image_dims(x)?;
    Ok(match op {
        ProcessingOp::Brightness(f) => x.map(|v| (f as f32 * v).clamp(0.0, 1.0)),
        ProcessingOp::Contrast(f) => contrast(x, f as f32),
        ProcessingOp::Saturation(f) => saturation(x, f as f32)?,
        ProcessingOp::GaussianBlur(s) => gaussian_blur(x, s),
        ProcessingOp::JpegLike(q) => jpeg_like(x, q),
    })
}

fn contrast(x: &TensorF, factor: f32) -> TensorF {
    let (c, h, w) = image_dims(x).expect("checked");
    let plane = h * w;
    let mut out = x.clone();
    for ch in 0..c {
        let vals = &mut out.data_mut()[ch * plane..(ch + 1) * plane];
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() as f32 / plane as f32;
        for v in vals.iter_mut() {
            *v = (factor * *v + (1.0 - factor) * mean).clamp(0.0, 1.0);
        }
    }
    out
}

fn saturation(x: &TensorF, factor: f32) -> Result<TensorF> {
    let (c, h, w) = image_dims(x)?;
    if c != 3 {
        return Err(Error::Config("saturation needs an RGB image".into()));
    }
    let plane = h * w;
    let d = x.data();
    let mut out = x.clone();
    let o = out.data_mut();
    for p in 0..plane {
        let gray = 0.299 * d[p] + 0.587 * d[plane + p] + 0.114 * d[2 * plane + p];
        for ch in 0..3 {
            let v = d[ch * plane + p];
            o[ch * plane + p] = (factor * v + (1.0 - factor) * gray).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Separable Gaussian with radius `ceil(3 sigma)`, edges replicated.
fn gaussian_blur(x: &TensorF, sigma: f64) -> TensorF {
    let radius = (3.0 * sigma).ceil() as usize;
    if radius == 0 {
        return x.clone();
    }
    let mut kernel: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp() as f32
        })
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (c, h, w) = image_dims(x).expect("checked");
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; c * h * w];
    let src = x.data();
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = clampi(xx as isize + k as isize - radius as isize, w);
                    acc += kv * src[(ch * h + y) * w + sx];
                }
                tmp[(ch * h + y) * w + xx] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = clampi(y as isize + k as isize - radius as isize, h);
                    acc += kv * tmp[(ch * h + sy) * w + xx];
                }
                out[(ch * h + y) * w + xx] = acc.clamp(0.0, 1.0);
            }
        }
    }
    TensorF::new(vec![c, h, w], out).expect("same shape")
}

const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled to `quality` with the usual IJG rule.
pub fn quant_table(quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(&LUMA_TABLE) {
        *o = ((base as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// Orthonormal 8-point DCT-II basis, `basis[k][n]`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let norm = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = norm * ((PI * (2 * n + 1) as f64 * k as f64) / 16.0).cos();
            }
        }
        b
    })
}

fn dct2(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for k in 0..8 {
            tmp[y * 8 + k] = (0..8).map(|n| b[k][n] * block[y * 8 + n]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for x in 0..8 {
            out[k * 8 + x] = (0..8).map(|n| b[k][n] * tmp[n * 8 + x]).sum();
        }
    }
    out
}

fn idct2(coef: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for n in 0..8 {
        for x in 0..8 {
            tmp[n * 8 + x] = (0..8).map(|k| b[k][n] * coef[k * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for n in 0..8 {
            out[y * 8 + n] = (0..8).map(|k| b[k][n] * tmp[y * 8 + k]).sum();
        }
    }
    out
}

/// Per-channel 8x8 block DCT quantization. Partial edge blocks are padded by
/// replication. Output is rounded to 8-bit levels.
fn jpeg_like(x: &TensorF, quality: u8) -> TensorF {
    let table = quant_table(quality);
    let (c, h, w) = image_dims(x).expect("checked");
    let src = x.data();
    let mut out = x.clone();
    let dst = out.data_mut();
    for ch in 0..c {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for xx in 0..8 {
                        let sy = (by + y).min(h - 1);
                        let sx = (bx + xx).min(w - 1);
                        block[y * 8 + xx] = src[(ch * h + sy) * w + sx] as f64 * 255.0 - 128.0;
                    }
                }
                let mut coef = dct2(&block);
                for (cv, q) in coef.iter_mut().zip(&table) {
                    *cv = (*cv / q).round() * q;
                }
                let rec = idct2(&coef);
                for y in 0..8.min(h - by) {
                    for xx in 0..8.min(w - bx) {
                        let v = (rec[y * 8 + xx] + 128.0) / 255.0;
                        dst[(ch * h + by + y) * w + bx + xx] = v.clamp(0.0, 1.0) as f32;
                    }
                }
            }
        }
    }
    quantize_in_place(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> TensorF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * h * w).map(|_| rng.gen_range(0u8..=255) as f32 / 255.0).collect();
        TensorF::new(vec![3, h, w], data).unwrap()
    }

    fn max_diff(a: &TensorF, b: &TensorF) -> f32 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    #[test]
    fn identity_parameters() {
        let img = random_image(1, 8, 8);
        for op in [
            ProcessingOp::Brightness(1.0),
            ProcessingOp::Contrast(1.0),
            ProcessingOp::GaussianBlur(0.0),
            ProcessingOp::Saturation(1.0),
        ] {
            assert_eq!(process_image(&img, op).unwrap(), img, "{op}");
        }
    }

    #[test]
    fn tiny_sigma_is_a_delta_kernel() {
        let img = random_image(2, 8, 8);
        assert_eq!(process_image(&img, ProcessingOp::GaussianBlur(1e-9)).unwrap(), img);
    }

    #[test]
    fn zero_contrast_collapses_to_channel_means() {
        let img = random_image(3, 6, 6);
        let out = process_image(&img, ProcessingOp::Contrast(0.0)).unwrap();
        for ch in 0..3 {
            let plane = &out.data()[ch * 36..(ch + 1) * 36];
            let mean: f32 = img.data()[ch * 36..(ch + 1) * 36].iter().sum::<f32>() / 36.0;
            assert!(plane.iter().all(|&v| (v - mean).abs() < 1e-6));
        }
    }

    #[test]
    fn zero_saturation_is_gray() {
        let img = random_image(4, 4, 4);
        let out = process_image(&img, ProcessingOp::Saturation(0.0)).unwrap();
        for p in 0..16 {
            let d = out.data();
            assert!((d[p] - d[16 + p]).abs() < 1e-6 && (d[p] - d[32 + p]).abs() < 1e-6);
        }
    }

    #[test]
    fn brightness_clips() {
        let img = TensorF::filled(vec![3, 2, 2], 0.9);
        let out = process_image(&img, ProcessingOp::Brightness(1.4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dct_roundtrip() {
        let mut block = [0.0; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = (i as f64 * 1.7).sin() * 100.0;
        }
        let back = idct2(&dct2(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn quality_100_stays_within_two_levels() {
        for seed in 0..20 {
            let img = random_image(seed, 32, 32);
            let out = process_image(&img, ProcessingOp::JpegLike(100)).unwrap();
            assert!(max_diff(&img, &out) <= 2.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn lower_quality_loses_more() {
        let img = random_image(9, 16, 16);
        let hi = max_diff(&img, &process_image(&img, ProcessingOp::JpegLike(90)).unwrap());
        let lo = max_diff(&img, &process_image(&img, ProcessingOp::JpegLike(30)).unwrap());
        assert!(lo > hi);
    }

    #[test]
    fn partial_blocks_keep_shape() {
        let img = random_image(5, 10, 13);
        let out = process_image(&img, ProcessingOp::JpegLike(75)).unwrap();
        assert_eq!(out.shape(), img.shape());
    }

    #[test]
    fn quant_table_scaling() {
        assert!(quant_table(100).iter().all(|&q| q == 1.0));
        assert_eq!(quant_table(50)[0], 16.0);
        assert_eq!(quant_table(75)[0], 8.0);
    }

    #[test]
    fn parses_op_strings() {
        assert_eq!("blur=1.0".parse::<ProcessingOp>().unwrap(), ProcessingOp::GaussianBlur(1.0));
        assert_eq!("jpeg=80".parse::<ProcessingOp>().unwrap(), ProcessingOp::JpegLike(80));
        assert_eq!("brightness=1.2".parse::<ProcessingOp>().unwrap(), ProcessingOp::Brightness(1.2));
        assert!("jpeg=0".parse::<ProcessingOp>().is_err());
        assert!("blur=-1".parse::<ProcessingOp>().is_err());
        assert!("blur=nan".parse::<ProcessingOp>().is_err());
        assert!("sharpen=2".parse::<ProcessingOp>().is_err());
        assert!("blur".parse::<ProcessingOp>().is_err());
    }

    #[test]
    fn ops_stay_in_unit_range() {
        let img = random_image(11, 12, 12);
        for op in ProcessingOp::sweep() {
            let out = process_image(&img, op).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{op}");
        }
    }
}
