//! Seeded parameter initialization. All draws sample f64 and cast, so a
//! given seed yields the same parameters in both precisions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Elem, Tensor};

pub type SeedRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeedRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn<E: Elem>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut SeedRng) -> Tensor<E> {
    let shape = shape.into();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            E::from_f64_val(v * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches generated data")
}

pub fn uniform<E: Elem>(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut SeedRng) -> Tensor<E> {
    let shape = shape.into();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| E::from_f64_val(rng.random_range(lo..hi))).collect();
    Tensor::from_vec(shape, data).expect("shape matches generated data")
}

/// He initialization for layers followed by a (P)ReLU-family activation.
pub fn kaiming<E: Elem>(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut SeedRng) -> Tensor<E> {
    randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
}
