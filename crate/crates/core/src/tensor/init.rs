use super::{Float, Tensor};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

/// Glorot/Xavier uniform initialization: samples on
/// `±scale * sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Float>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    scale: f64,
    rng: &mut RngStream,
) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid("glorot init needs positive fans"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("init scale must be positive, got {scale}")));
    }
    let bound = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
    Ok(Tensor::from_fn(shape, |_| {
        T::from_f64_lossy(rng.gen_range(-bound..bound))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_matches_uniform_law() {
        let mut rng = RngStream::new(5);
        let t: Tensor<f64> = glorot_uniform(&[1_000_000], 3000, 3000, 1.0, &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 6000.0;
        assert!((var / expected - 1.0).abs() < 0.1, "var {var} vs {expected}");
    }

    #[test]
    fn bounds_scale_with_coefficient() {
        let bound = (6.0f64 / 200.0).sqrt();
        for scale in [0.8, 1.35] {
            let mut rng = RngStream::new(11);
            let t: Tensor<f64> = glorot_uniform(&[20_000], 100, 100, scale, &mut rng).unwrap();
            let max = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= scale * bound);
            assert!(max > 0.99 * scale * bound);
        }
        let a: Tensor<f64> = glorot_uniform(&[50], 10, 10, 0.8, &mut RngStream::new(3)).unwrap();
        let b: Tensor<f64> = glorot_uniform(&[50], 10, 10, 1.35, &mut RngStream::new(3)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y / x - 1.35 / 0.8).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a: Tensor<f32> = glorot_uniform(&[64, 3, 3, 3], 27, 576, 1.0, &mut RngStream::new(8)).unwrap();
        let b: Tensor<f32> = glorot_uniform(&[64, 3, 3, 3], 27, 576, 1.0, &mut RngStream::new(8)).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
