use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// `(fan_in, fan_out)` for a weight of the given shape.
///
/// Matrices are `[out, in]`; higher-rank kernels are `[out, in, receptive...]`
/// and both fans are scaled by the receptive field size.
pub fn fans(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "cannot derive fans for shape {shape:?}"
        )));
    }
    Ok(match shape.len() {
        1 => (shape[0], shape[0]),
        2 => (shape[1], shape[0]),
        _ => {
            let rf: usize = shape[2..].iter().product();
            (shape[1] * rf, shape[0] * rf)
        }
    })
}

/// Glorot/Xavier uniform initialization on `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<F: Real>(shape: &[usize], seed: u64) -> Result<Tensor<F>> {
    let (fan_in, fan_out) = fans(shape)?;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| F::from_f64(rng.random_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data)
}

/// Mixes a base seed with a label so that each parameter of a model gets its
/// own reproducible stream.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_matches_glorot() {
        let t: Tensor<f64> = xavier_init(&[1000, 1000], 7).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 2000.0;
        assert!((var - expected).abs() < 0.1 * expected, "var {var}");
    }

    #[test]
    fn deterministic_for_seed() {
        let a: Tensor<f32> = xavier_init(&[64, 33], 11).unwrap();
        let b: Tensor<f32> = xavier_init(&[64, 33], 11).unwrap();
        assert_eq!(a, b);
        let c: Tensor<f32> = xavier_init(&[64, 33], 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bound_for_spliced_lps_layer() {
        let bound = (6.0f64 / 3084.0).sqrt();
        let t: Tensor<f64> = xavier_init(&[257, 2827], 3).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        // the bound is actually approached
        assert!(t.max_abs() > 0.99 * bound);
    }

    #[test]
    fn conv_kernel_fans() {
        assert_eq!(fans(&[16, 12, 11]).unwrap(), (132, 176));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(xavier_init::<f32>(&[0, 4], 1).is_err());
        assert!(xavier_init::<f32>(&[], 1).is_err());
    }
}
