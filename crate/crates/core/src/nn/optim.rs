use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for Adam, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam<T = f32> {
    config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Adam {
            config,
            first: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            second: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape {
                expected: vec![self.first.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            p.same_shape(g)?;
            if p.len() != m.len() {
                return Err(Error::Shape {
                    expected: vec![m.len()],
                    actual: p.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let b1 = T::of_f64(self.config.beta1);
        let b2 = T::of_f64(self.config.beta2);
        let eps = T::of_f64(self.config.epsilon);
        let t = self.step as i32;
        let c1 = T::of_f64(1.0 - self.config.beta1.powi(t));
        let c2 = T::of_f64(1.0 - self.config.beta2.powi(t));
        let lr = T::of_f64(lr);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step decay: `base_lr * 0.1^floor(epoch / 5)`.
pub fn lr_schedule(epoch: usize, base_lr: f64) -> f64 {
    base_lr * 0.1f64.powi((epoch / 5) as i32)
}
