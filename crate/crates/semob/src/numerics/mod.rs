//! Dense-tensor compute core: tensors, a reverse-mode tape, the loss,
//! the optimizer, parameter initialization, and a finite-difference
//! gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod rng;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use gradcheck::{grad_check, DEFAULT_EPS};
pub use graph::{Activation, Graph, NodeId};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Init for a linear map `x·W` with `W: [fan_in, fan_out]`:
/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
pub fn linear_init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("linear init")
}

/// Init for embedding tables: N(0, 0.02^2).
pub fn embedding_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, 0.02).expect("normal");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("embedding init")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seed_deterministic() {
        let a = linear_init(&mut rng::seeded(5), 4, 3);
        let b = linear_init(&mut rng::seeded(5), 4, 3);
        assert_eq!(a, b);
        let bound = 0.5;
        assert!(a.data().iter().all(|v| v.abs() < bound));
    }
}
