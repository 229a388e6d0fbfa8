use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Deterministic generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed; used to split a master seed into
/// per-job or per-component streams.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// He-uniform weight matrix `fan_in × fan_out`, entries in `±√(6 / fan_in)`.
pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sizes agree")
}

/// Parameters for a stack of affine layers with the given sizes,
/// `[w0, b0, w1, b1, …]`, biases zero.
pub fn init_params(sizes: &[usize], seed: u64) -> Vec<Tensor> {
    let mut rng = rng_from_seed(seed);
    sizes
        .windows(2)
        .flat_map(|w| [he_uniform(w[0], w[1], &mut rng), Tensor::zeros(&[1, w[1]])])
        .collect()
}
