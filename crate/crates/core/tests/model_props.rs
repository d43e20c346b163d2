mod common;

use common::{max_abs, network_params, random_network, random_state, relative_error};
use glpm_core::model::{
    grad_log_p0, grad_log_p0_into, link_prob, log_p0, log_p0_at, log_p1, log_posterior,
    marginal_vs_augmented_check,
};
use glpm_core::samplers::{mwg_log_ratio, with_row};
use glpm_core::{build_precision, BrightSet, GlpmState, Network, PriorSpec};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn central_difference(state: &GlpmState, net: &Network, bright: Option<&BrightSet>) -> Array2<f64> {
    let h = 1e-5;
    let mut out = Array2::zeros(state.positions.raw_dim());
    for ((i, k), g) in out.indexed_iter_mut() {
        let mut plus = state.clone();
        plus.positions[[i, k]] += h;
        let mut minus = state.clone();
        minus.positions[[i, k]] -= h;
        *g = (log_p0(&plus, net, bright).unwrap() - log_p0(&minus, net, bright).unwrap()) / (2.0 * h);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(
        n in 4usize..=10,
        d in 1usize..=3,
        categories in 1usize..=2,
        density in 0.1..0.6f64,
        restricted in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let net = random_network(n, categories, density, 0.1, seed);
        let state = random_state(&net, d, seed);
        let bright = restricted.then(|| {
            BrightSet::sample(&net, &state.tau, &mut ChaCha8Rng::seed_from_u64(seed))
        });
        let g = grad_log_p0(&state, &net, bright.as_ref()).unwrap();
        let fd = central_difference(&state, &net, bright.as_ref());
        let scale = max_abs(&g);
        prop_assume!(scale > 1e-8);
        prop_assert!(max_abs(&(&fd - &g)) <= 1e-6 * scale, "fd {fd:?} vs {g:?}");

        let mut fast = Array2::zeros(g.raw_dim());
        prop_assert!(grad_log_p0_into(&state.positions, &state.tau, &net, bright.as_ref(), &mut fast));
        prop_assert!(max_abs(&(&fast - &g)) <= 1e-12 * scale);
        let value = log_p0(&state, &net, bright.as_ref()).unwrap();
        prop_assert!(relative_error(value, log_p0_at(&state.positions, &state.tau, &net, bright.as_ref())) < 1e-12);
    }

    #[test]
    fn likelihood_is_translation_invariant((n, c, p, m, seed) in network_params(12), shift in prop::array::uniform2(-5.0..5.0f64)) {
        let net = random_network(n, c, p, m, seed);
        let state = random_state(&net, 2, seed);
        let mut moved = state.clone();
        for mut row in moved.positions.rows_mut() {
            row[0] += shift[0];
            row[1] += shift[1];
        }
        let before = log_p0(&state, &net, None).unwrap();
        let after = log_p0(&moved, &net, None).unwrap();
        prop_assert!((before - after).abs() <= 1e-10 * before.abs().max(1.0));

        // Edge part of log P1: Σ log τ − ½ Σ_edges ‖z_i − z_j‖², i.e. log P1 at Ω → 0.
        let edge_part = |s: &GlpmState| -> f64 {
            net.edges().iter().map(|e| {
                let diff = &s.positions.row(e.i) - &s.positions.row(e.j);
                s.tau[net.category(*e)].ln() - 0.5 * diff.dot(&diff)
            }).sum()
        };
        prop_assert!((edge_part(&state) - edge_part(&moved)).abs() <= 1e-10 * edge_part(&state).abs().max(1.0));
    }

    #[test]
    fn link_and_non_edge_terms_are_bounded((n, c, p, m, seed) in network_params(15), tau in 1e-6..1.0f64, s in 0.0..50.0f64) {
        let q = link_prob(tau, s);
        prop_assert!(q <= tau);
        prop_assert!(q > 0.0 || s > 1400.0);
        let net = random_network(n, c, p, m, seed);
        let state = random_state(&net, 2, seed);
        prop_assert!(log_p0(&state, &net, None).unwrap() <= 0.0);
    }

    #[test]
    fn augmentation_marginalizes_exactly(n in 2usize..=4, c in 1usize..=2, p in 0.0..1.0f64, seed in any::<u64>()) {
        let net = random_network(n, c, p, 0.15, seed);
        let state = random_state(&net, 2, seed);
        let (marginal, augmented) = marginal_vs_augmented_check(&state, &net).unwrap();
        prop_assert!((marginal - augmented).abs() <= 1e-10 * marginal.abs().max(1.0));
    }

    #[test]
    fn mwg_ratio_is_a_posterior_difference((n, c, p, m, seed) in network_params(10), i_raw in any::<usize>(), step in prop::array::uniform2(-1.0..1.0f64)) {
        let net = random_network(n, c, p, m, seed);
        let prior = PriorSpec::new(
            glpm_core::precision::ar1_precision(n, &[(1..=n).collect()], 0.5).unwrap(),
            vec![1.5; c], vec![2.0; c], 2.0, 1.0, 2,
        ).unwrap();
        let state = random_state(&net, 2, seed);
        let op = build_precision(&prior, &net.laplacian(), state.gamma2).unwrap();
        let i = i_raw % n;
        let proposal = [state.positions[[i, 0]] + step[0], state.positions[[i, 1]] + step[1]];
        let moved = GlpmState { positions: with_row(&state.positions, i, &proposal), ..state.clone() };
        let expected = log_posterior(&moved, &net, &prior, &op).unwrap() - log_posterior(&state, &net, &prior, &op).unwrap();
        let got = mwg_log_ratio(&state, &net, &prior, i, &proposal);
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn log_p1_drops_gaussian_energy((n, c, p, m, seed) in network_params(12)) {
        let net = random_network(n, c, p, m, seed);
        let state = random_state(&net, 2, seed);
        let op = build_precision(&PriorSpec::standard(n, c), &net.laplacian(), state.gamma2).unwrap();
        let lp1 = log_p1(&state, &net, &op).unwrap();
        let edges: f64 = net.edge_count_per_category().iter().zip(&state.tau).map(|(&k, t)| k as f64 * t.ln()).sum();
        prop_assert!(lp1 <= edges + 1e-12);
    }
}
