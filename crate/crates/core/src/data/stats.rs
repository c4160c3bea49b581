use serde::{Deserialize, Serialize};

use crate::data::dataset::Sample;
use crate::error::{Error, Result};
use crate::tensor::{image_dims, TensorF};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel normalization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.mean.is_empty() {
            return Err(Error::Config("normalization stats length mismatch".into()));
        }
        if self.mean.iter().any(|m| !m.is_finite()) || self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("normalization stats must be finite with positive std".into()));
        }
        Ok(())
    }

    /// `(x - mean) / std` per channel.
    pub fn normalize(&self, x: &TensorF) -> Result<TensorF> {
        let (c, h, w) = image_dims(x)?;
        if c != self.mean.len() {
            return Err(Error::Shape {
                expected: vec![self.mean.len(), h, w],
                actual: x.shape().to_vec(),
            });
        }
        let plane = h * w;
        let mut out = x.clone();
        for (ch, vals) in out.data_mut().chunks_mut(plane).enumerate() {
            let (m, s) = (self.mean[ch] as f32, self.std[ch] as f32);
            vals.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: &TensorF) -> Result<TensorF> {
        let (c, h, w) = image_dims(x)?;
        if c != self.mean.len() {
            return Err(Error::Shape {
                expected: vec![self.mean.len(), h, w],
                actual: x.shape().to_vec(),
            });
        }
        let mut out = x.clone();
        for (ch, vals) in out.data_mut().chunks_mut(h * w).enumerate() {
            let (m, s) = (self.mean[ch] as f32, self.std[ch] as f32);
            vals.iter_mut().for_each(|v| *v = *v * s + m);
        }
        Ok(out)
    }
}

/// Channelwise mean and population std over every pixel of `samples`.
pub fn compute_stats(samples: &[Sample]) -> Result<NormStats> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("cannot compute statistics of an empty split".into()))?;
    let (c, h, w) = image_dims(&first.image)?;
    let plane = h * w;
    let mut sum = vec![0.0f64; c];
    let mut sq = vec![0.0f64; c];
    for s in samples {
        s.image.expect_shape(&[c, h, w])?;
        for (ch, vals) in s.image.data().chunks(plane).enumerate() {
            for &v in vals {
                sum[ch] += v as f64;
                sq[ch] += v as f64 * v as f64;
            }
        }
    }
    let n = (samples.len() * plane) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}
