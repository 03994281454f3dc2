use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::Scalar;

/// Derive an independent named rng stream from one root seed.
///
/// Streams are stable across runs and platforms: the label is folded into
/// the ChaCha key with an FNV-1a walk, so "weights", "data-order", and
/// "augment" never collide or interact.
pub fn seed_stream(root: u64, label: &str) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    let mut h: u64 = 0xcbf29ce484222325 ^ root;
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        for &b in label.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= root.rotate_left(i as u32 * 17 + 1);
        h = h.wrapping_mul(0x100000001b3);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

pub fn zeros<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::from_elem(IxDyn(shape), T::one())
}

pub fn full<T: Scalar>(shape: &[usize], v: f64) -> ArrayD<T> {
    ArrayD::from_elem(IxDyn(shape), T::of_f64(v))
}

pub fn uniform<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha20Rng) -> ArrayD<T> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        T::of_f64(rng.random::<f64>() * (hi - lo) + lo)
    })
}

pub fn normal<T: Scalar>(shape: &[usize], mean: f64, std: f64, rng: &mut ChaCha20Rng) -> ArrayD<T> {
    // Box-Muller; one draw per element keeps the stream layout simple.
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        T::of_f64(mean + std * z)
    })
}

/// He initialization for convolutions (fan-out mode, ReLU gain).
pub fn kaiming_normal<T: Scalar>(
    shape: &[usize],
    fan_out: usize,
    rng: &mut ChaCha20Rng,
) -> ArrayD<T> {
    let std = (2.0 / fan_out as f64).sqrt();
    normal(shape, 0.0, std, rng)
}

/// Default linear-layer initialization: uniform(+-1/sqrt(fan_in)).
pub fn linear_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut ChaCha20Rng,
) -> ArrayD<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    uniform(shape, -bound, bound, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_stable() {
        let mut a1 = seed_stream(7, "weights");
        let mut a2 = seed_stream(7, "weights");
        let mut b = seed_stream(7, "data");
        let x1: f64 = a1.random();
        let x2: f64 = a2.random();
        let y: f64 = b.random();
        assert_eq!(x1, x2);
        assert_ne!(x1, y);
    }

    #[test]
    fn normal_moments_roughly_right() {
        let mut rng = seed_stream(3, "test");
        let a: ArrayD<f64> = normal(&[10_000], 0.0, 1.0, &mut rng);
        let mean = a.sum() / 10_000.0;
        let var = a.mapv(|v| v * v).sum() / 10_000.0 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }
}
