use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Seeded uniform initializer, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        Tensor::from_fn(shape, |_| self.rng.random_range(-bound..bound))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = Initializer::new(7).uniform(&[16, 4], 16);
        let b = Initializer::new(7).uniform(&[16, 4], 16);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 0.25));
        assert_ne!(a, Initializer::new(8).uniform(&[16, 4], 16));
    }
}
