use rand::Rng as _;

use crate::diffcore::tensor::Tensor;
use crate::rng::Rng;

/// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`, scaled by
/// `gain`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, gain: f32, rng: &mut Rng) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| gain * rng.random_range(-s..=s)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
