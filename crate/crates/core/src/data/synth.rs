//! Procedural datasets in which each class leaves a faint, class-specific
//! statistical trace ("fingerprint") on otherwise class-independent content.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ppm::quantize_in_place;
use crate::error::{Error, Result};
use crate::tensor::TensorF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintKind {
    /// Sum of two oriented mid/high-frequency gratings.
    Periodic,
    /// Fixed pseudo-random high-frequency field.
    NoiseField,
    /// An 8x8 tile of DCT basis functions repeated on the block grid.
    BlockQuant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    InSet,
    OutOfSet,
}

pub const DEFAULT_AMPLITUDE: f64 = 0.04;
pub const DEFAULT_FAMILY_SHARE: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub role: Role,
    pub fingerprint: FingerprintKind,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    /// Per in-set class.
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Per out-of-set class; these only appear in the test split.
    pub out_of_set_test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: 600,
            val: 100,
            test: 100,
            out_of_set_test: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub shape: [usize; 3],
    pub seed: u64,
    pub counts: SplitCounts,
    /// Weight of the component every class of a fingerprint family shares.
    #[serde(default)]
    pub family_share: f64,
    /// Standard deviation of the per-pixel sensor noise.
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    pub classes: Vec<ClassSpec>,
}

fn default_noise() -> f64 {
    NOISE_SIGMA
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

/// Mixed-family presets: five in-set and five out-of-set classes, with the
/// three fingerprint families spread over both sides differently per preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    S1Analog,
    S2Analog,
    S3Analog,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s1-analog" => Ok(Preset::S1Analog),
            "s2-analog" => Ok(Preset::S2Analog),
            "s3-analog" => Ok(Preset::S3Analog),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::S1Analog => "s1-analog",
            Preset::S2Analog => "s2-analog",
            Preset::S3Analog => "s3-analog",
        }
    }

    fn families(self) -> ([FingerprintKind; 5], [FingerprintKind; 5]) {
        use FingerprintKind::*;
        match self {
            Preset::S1Analog => (
                [Periodic, Periodic, NoiseField, BlockQuant, BlockQuant],
                [Periodic, NoiseField, NoiseField, BlockQuant, Periodic],
            ),
            Preset::S2Analog => (
                [NoiseField, NoiseField, Periodic, BlockQuant, Periodic],
                [BlockQuant, Periodic, NoiseField, Periodic, BlockQuant],
            ),
            Preset::S3Analog => (
                [BlockQuant, Periodic, NoiseField, NoiseField, BlockQuant],
                [Periodic, BlockQuant, Periodic, NoiseField, NoiseField],
            ),
        }
    }

    pub fn config(self, seed: u64) -> SynthConfig {
        let (inset, outset) = self.families();
        let base = match self {
            Preset::S1Analog => 100,
            Preset::S2Analog => 200,
            Preset::S3Analog => 300,
        };
        let mut classes = Vec::new();
        for (i, kind) in inset.into_iter().enumerate() {
            classes.push(ClassSpec {
                name: format!("in{}", i + 1),
                role: Role::InSet,
                fingerprint: kind,
                amplitude: DEFAULT_AMPLITUDE,
                seed: base + i as u64,
            });
        }
        for (i, kind) in outset.into_iter().enumerate() {
            classes.push(ClassSpec {
                name: format!("out{}", i + 1),
                role: Role::OutOfSet,
                fingerprint: kind,
                amplitude: DEFAULT_AMPLITUDE,
                seed: base + 50 + i as u64,
            });
        }
        SynthConfig {
            shape: [3, 32, 32],
            seed,
            counts: SplitCounts::default(),
            family_share: DEFAULT_FAMILY_SHARE,
            noise_sigma: NOISE_SIGMA,
            classes,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.shape;
        if c != 3 || h < 8 || w < 8 || h > 1024 || w > 1024 {
            return Err(Error::Config(format!("unsupported image shape {:?}", self.shape)));
        }
        if !(0.0..=0.1).contains(&self.noise_sigma) {
            return Err(Error::Config(format!("noise_sigma {} outside [0, 0.1]", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.family_share) {
            return Err(Error::Config(format!("family_share {} outside [0, 1)", self.family_share)));
        }
        let in_set = self.classes.iter().filter(|c| c.role == Role::InSet).count();
        if in_set < 2 {
            return Err(Error::Config("at least two in-set classes are required".into()));
        }
        for (i, class) in self.classes.iter().enumerate() {
            validate_class_name(&class.name)?;
            if !(0.0..0.1).contains(&class.amplitude) {
                return Err(Error::Config(format!(
                    "class {}: amplitude {} outside [0, 0.1)",
                    class.name, class.amplitude
                )));
            }
            for other in &self.classes[..i] {
                if other.name == class.name {
                    return Err(Error::Config(format!("duplicate class name {}", class.name)));
                }
                if other.seed == class.seed {
                    return Err(Error::Config(format!(
                        "classes {} and {} share fingerprint seed {}",
                        other.name, class.name, class.seed
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn in_set(&self) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter().filter(|c| c.role == Role::InSet)
    }

    pub fn num_in_set(&self) -> usize {
        self.in_set().count()
    }

    /// Number of images of `class` in `split`.
    pub fn count(&self, class: &ClassSpec, split: Split) -> usize {
        match (class.role, split) {
            (Role::InSet, Split::Train) => self.counts.train,
            (Role::InSet, Split::Val) => self.counts.val,
            (Role::InSet, Split::Test) => self.counts.test,
            (Role::OutOfSet, Split::Test) => self.counts.out_of_set_test,
            (Role::OutOfSet, _) => 0,
        }
    }
}

pub fn validate_class_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid class name {name:?}")))
    }
}

/// SplitMix64 finalizer, used to derive independent per-file seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| mix(acc ^ mix(p)))
}

/// Fingerprint of class `class_index`: its own pattern blended with the
/// pattern shared by its family, rescaled to peak magnitude 1.
pub fn class_pattern(config: &SynthConfig, class_index: usize) -> TensorF {
    let class = &config.classes[class_index];
    let own = fingerprint_pattern(class.fingerprint, class.seed, config.shape);
    let s = config.family_share as f32;
    if s == 0.0 {
        return own;
    }
    let family = fingerprint_pattern(class.fingerprint, family_seed(class.fingerprint), config.shape);
    let mixed = own.zip_map(&family, |a, b| (1.0 - s) * a + s * b).expect("same shape");
    let peak = mixed.data().iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-12);
    mixed.map(|v| v / peak)
}

fn family_seed(kind: FingerprintKind) -> u64 {
    derive_seed(&[0xFA417, kind as u64])
}

/// The class fingerprint as a `[3, h, w]` field with peak magnitude 1.
pub fn fingerprint_pattern(kind: FingerprintKind, seed: u64, shape: [usize; 3]) -> TensorF {
    let [c, h, w] = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[0xF1A6, seed]));
    let mut data = vec![0.0f32; c * h * w];
    match kind {
        FingerprintKind::Periodic => {
            let mut waves = Vec::new();
            for _ in 0..2 {
                let period = rng.gen_range(2.0..6.0f64);
                let theta = rng.gen_range(0.0..PI);
                let phases: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
                waves.push((period, theta, phases));
            }
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v: f64 = waves
                            .iter()
                            .map(|(period, theta, phases)| {
                                let u = x as f64 * theta.cos() + y as f64 * theta.sin();
                                (2.0 * PI * u / period + phases[ch]).cos()
                            })
                            .sum::<f64>()
                            / 2.0;
                        data[(ch * h + y) * w + x] = v as f32;
                    }
                }
            }
        }
        FingerprintKind::NoiseField => {
            for v in data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        FingerprintKind::BlockQuant => {
            let mut tile = [0.0f64; 64];
            for _ in 0..3 {
                let (ku, kv) = loop {
                    let ku = rng.gen_range(0..8usize);
                    let kv = rng.gen_range(0..8usize);
                    if ku + kv >= 2 {
                        break (ku, kv);
                    }
                };
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                for y in 0..8 {
                    for x in 0..8 {
                        tile[y * 8 + x] += sign
                            * ((PI * (2 * y + 1) as f64 * ku as f64) / 16.0).cos()
                            * ((PI * (2 * x + 1) as f64 * kv as f64) / 16.0).cos();
                    }
                }
            }
            let peak = tile.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let gains: Vec<f64> = (0..c).map(|_| rng.gen_range(0.6..1.0)).collect();
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data[(ch * h + y) * w + x] = (gains[ch] * tile[(y % 8) * 8 + x % 8] / peak) as f32;
                    }
                }
            }
        }
    }
    TensorF::new(shape.to_vec(), data).expect("shape matches")
}

/// Smooth class-independent content: a coarse random grid, bilinearly
/// upsampled, in `[0.2, 0.8]`.
pub fn base_content(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> TensorF {
    let [c, h, w] = shape;
    const GRID: usize = 5;
    let luma: Vec<f64> = (0..GRID * GRID).map(|_| rng.gen_range(0.25..0.75)).collect();
    let mut data = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let chroma: Vec<f64> = (0..GRID * GRID).map(|_| rng.gen_range(-0.05..0.05)).collect();
        for y in 0..h {
            let gy = y as f64 / (h - 1) as f64 * (GRID - 1) as f64;
            let y0 = (gy.floor() as usize).min(GRID - 2);
            let fy = gy - y0 as f64;
            for x in 0..w {
                let gx = x as f64 / (w - 1) as f64 * (GRID - 1) as f64;
                let x0 = (gx.floor() as usize).min(GRID - 2);
                let fx = gx - x0 as f64;
                let at = |yy: usize, xx: usize| luma[yy * GRID + xx] + chroma[yy * GRID + xx];
                let v = at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + at(y0, x0 + 1) * (1.0 - fy) * fx
                    + at(y0 + 1, x0) * fy * (1.0 - fx)
                    + at(y0 + 1, x0 + 1) * fy * fx;
                data[(ch * h + y) * w + x] = v.clamp(0.2, 0.8) as f32;
            }
        }
    }
    TensorF::new(shape.to_vec(), data).expect("shape matches")
}

/// Per-image sensor noise level.
pub const NOISE_SIGMA: f64 = 0.004;

/// One image of `class`: base content plus jittered fingerprint plus sensor
/// noise, clipped and rounded to 8-bit levels. Also returns the base content.
pub fn render(
    config: &SynthConfig,
    class_index: usize,
    split: Split,
    index: usize,
    pattern: &TensorF,
) -> (TensorF, TensorF) {
    let class = &config.classes[class_index];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        config.seed,
        split.salt(),
        class_index as u64,
        index as u64,
    ]));
    let base = base_content(&mut rng, config.shape);
    let gain = class.amplitude * rng.gen_range(0.75..1.25);
    let mut img = base.clone();
    for (v, &p) in img.data_mut().iter_mut().zip(pattern.data()) {
        let n: f64 = rng.sample(StandardNormal);
        *v = (*v as f64 + gain * p as f64 + config.noise_sigma * n).clamp(0.0, 1.0) as f32;
    }
    quantize_in_place(&mut img);
    (img, base)
}
