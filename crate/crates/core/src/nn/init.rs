use alloc::vec::Vec;

use rand::Rng;

use super::Matrix;
use crate::math;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, drawn row-major.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> Matrix {
    let limit = math::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
    let values: Vec<f64> = (0..fan_out * fan_in)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_out, fan_in, values).expect("shape is consistent by construction")
}
