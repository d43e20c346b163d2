//! Updates of the link parameters `τ` and the prior scale `γ²`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::model::{log1mexp, sq_dist, GlpmState};
use crate::network::Network;
use crate::precision::PriorSpec;
use crate::samplers::BrightSet;

/// Beta posterior parameters of each `τ_c` given θ.
///
/// Edges count as successes (their θ is structurally 1) together with the
/// bright non-edges; dark non-edges are the failures.
pub fn tau_posterior_params(
    prior: &PriorSpec,
    bright: &BrightSet,
    network: &Network,
) -> Vec<(f64, f64)> {
    let edges = network.edge_count_per_category();
    let lit = bright.bright_count_per_category();
    let dark = bright.dark_count_per_category();
    (0..network.num_categories())
        .map(|c| {
            (
                prior.tau_alpha[c] + (edges[c] + lit[c]) as f64,
                prior.tau_beta[c] + dark[c] as f64,
            )
        })
        .collect()
}

/// Conjugate draw of every `τ_c` from its Beta full conditional.
pub fn gibbs_tau<R: Rng + ?Sized>(
    prior: &PriorSpec,
    bright: &BrightSet,
    network: &Network,
    rng: &mut R,
) -> Vec<f64> {
    tau_posterior_params(prior, bright, network)
        .into_iter()
        .map(|(a, b)| {
            let draw = Beta::new(a, b).expect("positive Beta parameters").sample(rng);
            // Keep the draw strictly inside (0, 1) so log τ and log(1 − τ) stay finite.
            draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
        })
        .collect()
}

/// InverseGamma shape and rate of the `γ²` full conditional.
pub fn gamma2_posterior_params(prior: &PriorSpec, positions: &Array2<f64>) -> (f64, f64) {
    let (n, d) = positions.dim();
    (
        prior.gamma_a + 0.5 * (n * d) as f64,
        prior.gamma_b + 0.5 * prior.omega_quadratic(positions),
    )
}

/// Conjugate draw of `γ²`. The caller must rebuild `Σ` afterwards.
pub fn gibbs_gamma2<R: Rng + ?Sized>(prior: &PriorSpec, positions: &Array2<f64>, rng: &mut R) -> f64 {
    let (shape, rate) = gamma2_posterior_params(prior, positions);
    let precision = Gamma::new(shape, 1.0 / rate).expect("positive Gamma parameters").sample(rng);
    (1.0 / precision).min(f64::MAX)
}

/// Log ratio of the `τ_c` full conditional at `proposal` versus the current value.
pub fn rw_tau_log_ratio(
    state: &GlpmState,
    network: &Network,
    prior: &PriorSpec,
    category: usize,
    proposal: f64,
) -> f64 {
    let current = state.tau[category];
    let successes = network.edge_count_per_category()[category] as f64;
    let mut log_ratio = (prior.tau_alpha[category] + successes - 1.0) * (proposal.ln() - current.ln())
        + (prior.tau_beta[category] - 1.0) * ((-proposal).ln_1p() - (-current).ln_1p());
    let (lt_new, lt_old) = (proposal.ln(), current.ln());
    let z = &state.positions;
    for d in network.non_edges_in_category(category).expect("category in range") {
        let half_s = 0.5 * sq_dist(z, d.i, d.j);
        log_ratio += log1mexp(half_s - lt_new) - log1mexp(half_s - lt_old);
    }
    log_ratio
}

/// Random-walk Metropolis on each `τ_c` in turn with uniform proposals of
/// half-width `widths[c]`. Proposals outside `(0, 1)` are rejected before any
/// density evaluation. Returns per-category acceptance flags.
pub fn rw_tau<R: Rng + ?Sized>(
    state: &mut GlpmState,
    network: &Network,
    prior: &PriorSpec,
    widths: &[f64],
    rng: &mut R,
) -> Vec<bool> {
    (0..state.tau.len())
        .map(|c| {
            let w = widths[c];
            let proposal = state.tau[c] + rng.random_range(-w..w);
            if !(proposal > 0.0 && proposal < 1.0) {
                return false;
            }
            let log_ratio = rw_tau_log_ratio(state, network, prior, c, proposal);
            let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
            if accept {
                state.tau[c] = proposal;
            }
            accept
        })
        .collect()
}
