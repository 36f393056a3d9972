//! Seeded parameter initialization: uniform in +-sqrt(6 / (fan_in + fan_out)).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::tensor::Tensor;

pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Uniform init scaled by the layer's fan-in and fan-out.
pub fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha12Rng,
) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}
