//! Shared fixtures: Study-1 style synthetic networks at a fixed seed.

use glpm_core::{generate_network, GlpmState, Network, PriorSpec, SynthSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub network: Network,
    pub prior: PriorSpec,
    pub state: GlpmState,
}

/// One-category network on `n` nodes with `Ω = I`, `d = 2`, `γ² = 1`, and a
/// state at the generating positions.
pub fn study_cell(n: usize, tau: f64) -> Fixture {
    let (network, truth) = generate_network(&SynthSpec::isotropic(n, tau, 1.0, 7), None)
        .expect("fixture spec is valid");
    let prior = PriorSpec::standard(n, 1);
    let state = GlpmState::new(truth, vec![tau], 1.0).expect("generated positions are finite");
    Fixture { network, prior, state }
}

pub fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}
