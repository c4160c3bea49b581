use crate::error::{Error, Result};
use crate::tensor::TensorF;

/// Blends trigger `t` into `x`: `(1 - alpha) * x + alpha * t`.
pub fn inject_trigger(x: &TensorF, t: &TensorF, alpha: f64) -> Result<TensorF> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("injection strength {alpha} outside [0, 1]")));
    }
    let a = alpha as f32;
    x.zip_map(t, |xv, tv| (1.0 - a) * xv + a * tv)
}

/// Perturbs `x` with an image `z` from another class: `clip(x + beta * z)`.
pub fn mixup_perturb(x: &TensorF, z: &TensorF, beta: f64) -> Result<TensorF> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("mixup strength {beta} outside [0, 1]")));
    }
    let b = beta as f32;
    x.zip_map(z, |xv, zv| (xv + b * zv).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(v: f32) -> TensorF {
        TensorF::filled(vec![3, 2, 2], v)
    }

    fn assert_all_close(t: &TensorF, v: f32) {
        assert!(t.data().iter().all(|&x| (x - v).abs() < 1e-6), "{:?} != {v}", t.data());
    }

    #[test]
    fn blend_uniform_images() {
        assert_all_close(&inject_trigger(&img(0.5), &img(1.0), 0.1).unwrap(), 0.55);
    }

    #[test]
    fn blend_endpoints() {
        let x = TensorF::new(vec![3, 1, 1], vec![0.1, 0.2, 0.3]).unwrap();
        let t = TensorF::new(vec![3, 1, 1], vec![0.9, 0.8, 0.7]).unwrap();
        assert_eq!(inject_trigger(&x, &t, 0.0).unwrap(), x);
        assert_eq!(inject_trigger(&x, &t, 1.0).unwrap(), t);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let t = TensorF::filled(vec![3, 4, 4], 0.0);
        assert!(inject_trigger(&img(0.5), &t, 0.1).is_err());
        assert!(mixup_perturb(&img(0.5), &t, 0.1).is_err());
        assert!(inject_trigger(&img(0.5), &img(0.5), 1.5).is_err());
    }

    #[test]
    fn mixup_cases() {
        assert_eq!(mixup_perturb(&img(0.3), &img(0.7), 0.0).unwrap(), img(0.3));
        assert_all_close(&mixup_perturb(&img(0.9), &img(1.0), 0.15).unwrap(), 1.0);
        assert_all_close(&mixup_perturb(&img(0.2), &img(0.4), 0.15).unwrap(), 0.26);
    }

    proptest! {
        #[test]
        fn injection_is_symmetric_affine(
            xs in prop::collection::vec(0.0f32..=1.0, 12),
            ts in prop::collection::vec(0.0f32..=1.0, 12),
            alpha in 0.0f64..=1.0,
        ) {
            let x = TensorF::new(vec![3, 2, 2], xs).unwrap();
            let t = TensorF::new(vec![3, 2, 2], ts).unwrap();
            let a = inject_trigger(&x, &t, alpha).unwrap();
            let b = inject_trigger(&t, &x, alpha).unwrap();
            for i in 0..12 {
                prop_assert!((a.data()[i] + b.data()[i] - x.data()[i] - t.data()[i]).abs() < 1e-6);
                prop_assert!((0.0..=1.0).contains(&a.data()[i]));
            }
        }

        #[test]
        fn mixup_stays_in_unit_range(
            xs in prop::collection::vec(0.0f32..=1.0, 12),
            zs in prop::collection::vec(0.0f32..=1.0, 12),
            beta in 0.0f64..=1.0,
        ) {
            let x = TensorF::new(vec![3, 2, 2], xs).unwrap();
            let z = TensorF::new(vec![3, 2, 2], zs).unwrap();
            let out = mixup_perturb(&x, &z, beta).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
