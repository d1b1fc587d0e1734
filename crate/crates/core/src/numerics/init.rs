use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::tensor::Tensor;

/// Seedable counter-based generator used for every random draw in the crate.
pub type Prng = ChaCha8Rng;

pub fn prng(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Kaiming-uniform weights: `U(-b, b)` with `b = √(6 / fan_in)`.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut Prng) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    uniform(shape, -bound, bound, rng)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Prng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(lo..hi));
    t
}
