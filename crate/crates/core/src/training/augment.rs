use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{process_image, ProcessingOp};
use crate::error::{Error, Result};
use crate::tensor::{image_dims, TensorF};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub jpeg_prob: f64,
    pub jpeg_quality_min: u8,
    pub jpeg_quality_max: u8,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            jpeg_prob: 0.5,
            jpeg_quality_min: 70,
            jpeg_quality_max: 100,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            jpeg_prob: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) || !(0.0..=1.0).contains(&self.jpeg_prob) {
            return Err(Error::Config("augmentation probabilities must be in [0, 1]".into()));
        }
        let (lo, hi) = (self.jpeg_quality_min, self.jpeg_quality_max);
        if lo == 0 || hi > 100 || lo > hi {
            return Err(Error::Config(format!("JPEG quality range {lo}..={hi} invalid")));
        }
        Ok(())
    }
}

pub fn flip_horizontal(x: &TensorF) -> Result<TensorF> {
    let (_, _, w) = image_dims(x)?;
    let mut out = x.clone();
    out.data_mut().chunks_mut(w).for_each(|row| row.reverse());
    Ok(out)
}

/// Random horizontal flip, then random JPEG-like recompression.
pub fn augment<R: Rng + ?Sized>(x: &TensorF, rng: &mut R, cfg: &AugmentConfig) -> Result<TensorF> {
    cfg.validate()?;
    let flip = rng.gen_bool(cfg.flip_prob);
    let jpeg = rng.gen_bool(cfg.jpeg_prob);
    let quality = rng.gen_range(cfg.jpeg_quality_min..=cfg.jpeg_quality_max);
    let mut out = if flip { flip_horizontal(x)? } else { x.clone() };
    if jpeg {
        out = process_image(&out, ProcessingOp::JpegLike(quality))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> TensorF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * 12 * 16).map(|_| (rng.gen_range(0..=255u8) as f32) / 255.0).collect();
        TensorF::new(vec![3, 12, 16], data).unwrap()
    }

    #[test]
    fn disabled_is_identity() {
        let x = random_image(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            assert_eq!(augment(&x, &mut rng, &AugmentConfig::disabled()).unwrap(), x);
        }
    }

    #[test]
    fn flip_is_an_involution() {
        let x = random_image(3);
        let once = flip_horizontal(&x).unwrap();
        assert_ne!(once, x);
        assert_eq!(once.data()[0], x.data()[15]);
        assert_eq!(flip_horizontal(&once).unwrap(), x);
    }

    #[test]
    fn quality_100_is_near_identity() {
        let cfg = AugmentConfig {
            flip_prob: 0.0,
            jpeg_prob: 1.0,
            jpeg_quality_min: 100,
            jpeg_quality_max: 100,
        };
        for seed in 0..5 {
            let x = random_image(seed);
            let y = augment(&x, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
            let err = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            assert!(err <= 2.0 / 255.0 + 1e-6, "{err}");
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = AugmentConfig {
            jpeg_quality_min: 90,
            jpeg_quality_max: 80,
            ..Default::default()
        };
        assert!(augment(&random_image(0), &mut ChaCha8Rng::seed_from_u64(0), &cfg).is_err());
    }
}
