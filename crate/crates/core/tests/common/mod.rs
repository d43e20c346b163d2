#![allow(dead_code)]

use glpm_core::{GlpmState, Network};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random network with up to `max_categories` categories and some unobserved dyads.
pub fn random_network(n: usize, categories: usize, density: f64, masked: f64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut covs = Vec::new();
    let mut mask = Vec::new();
    for j in 1..n {
        for i in 0..j {
            let c = rng.random_range(0..categories);
            if c != 0 {
                covs.push((i, j, c));
            }
            let u: f64 = rng.random();
            if u < masked {
                mask.push((i, j));
            } else if u < masked + density {
                edges.push((i, j));
            }
        }
    }
    Network::new(n, categories, &edges, &covs, &mask).unwrap()
}

pub fn random_positions(n: usize, d: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| scale * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn random_state(network: &Network, d: usize, seed: u64) -> GlpmState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let tau = (0..network.num_categories()).map(|_| rng.random_range(0.05..0.95)).collect();
    let gamma2 = rng.random_range(0.2..3.0);
    GlpmState::new(random_positions(network.node_count(), d, 1.5, seed), tau, gamma2).unwrap()
}

/// `(n, categories, density, masked fraction, seed)`.
pub fn network_params(max_n: usize) -> impl Strategy<Value = (usize, usize, f64, f64, u64)> {
    (3..=max_n, 1..=3usize, 0.05..0.7f64, 0.0..0.2f64, any::<u64>())
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
