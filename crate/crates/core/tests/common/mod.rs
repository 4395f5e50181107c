#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random aggregation instance: sample counts, previous and current costs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub samples: Vec<u64>,
    pub prev: Vec<f64>,
    pub curr: Vec<f64>,
    pub alpha: f64,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Costs are drawn log-uniformly over several decades to exercise large and
/// small ratios.
pub fn random_instance(rng: &mut ChaCha8Rng, max_clients: usize) -> Instance {
    let n = rng.random_range(1..=max_clients);
    let samples = (0..n).map(|_| rng.random_range(1..=500)).collect();
    let cost = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-3.0..3.0));
    let prev = (0..n).map(|_| cost(rng)).collect();
    let curr = (0..n).map(|_| cost(rng)).collect();
    let alpha = match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    };
    Instance {
        samples,
        prev,
        curr,
        alpha,
    }
}
