//! Transition kernels and the three full samplers built from them.

mod bright;
mod conjugate;
mod hmc;
mod mwg;

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bright::{
    bright_conditional, brighten_probability, darken_probability, flymc_sweep, BrightSet,
};
pub use conjugate::{
    gamma2_posterior_params, gibbs_gamma2, gibbs_tau, rw_tau, rw_tau_log_ratio,
    tau_posterior_params,
};
pub use hmc::{
    gaussian_energy, integrate, rotate, split_hmc_step, HmcConfig, HmcOutcome, HmcWorkspace,
    MomentumBlock,
};
pub use mwg::{mwg_log_ratio, mwg_sweep, with_row, MwgConfig};

use crate::diagnostics::{AcceptanceStats, ChainOutput, PhaseTimings};
use crate::error::{GlpmError, Result};
use crate::model::{log_p0_with_grad, sq_dist, GlpmState};
use crate::network::Network;
use crate::precision::{sample_prior_positions, FactorBackend, PrecisionOperator, PriorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Mwg,
    SplitHmc,
    SplitHmcFlymc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Mwg, SamplerKind::SplitHmc, SamplerKind::SplitHmcFlymc];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Mwg => "mwg",
            SamplerKind::SplitHmc => "split_hmc",
            SamplerKind::SplitHmcFlymc => "split_hmc_flymc",
        }
    }

    /// Whether `τ` is updated by random-walk Metropolis (otherwise conjugate Gibbs).
    pub fn uses_rw_tau(self) -> bool {
        self != SamplerKind::SplitHmcFlymc
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = GlpmError;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GlpmError::InvalidParameter(format!("unknown sampler kind `{s}`")))
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Step sizes and numerical options for every kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mwg: MwgConfig,
    pub hmc: HmcConfig,
    /// Random-walk half-widths for `τ`, one per category.
    pub tau_widths: Vec<f64>,
    pub backend: FactorBackend,
    /// Gradient-ascent steps applied to the prior draw of `Z*` at initialization.
    pub init_ascent_steps: usize,
}

impl SamplerConfig {
    pub fn new(categories: usize) -> Self {
        SamplerConfig {
            mwg: MwgConfig::default(),
            hmc: HmcConfig::default(),
            tau_widths: vec![0.05; categories],
            backend: FactorBackend::Auto,
            init_ascent_steps: 200,
        }
    }

    fn validate(&self, kind: SamplerKind, network: &Network, prior: &PriorSpec) -> Result<()> {
        let c = network.num_categories();
        if prior.num_categories() != c {
            return Err(GlpmError::ConfigMismatch(format!(
                "prior has {} Beta hyperparameter pairs, network has {c} categories",
                prior.num_categories()
            )));
        }
        if prior.node_count() != network.node_count() {
            return Err(GlpmError::ConfigMismatch(format!(
                "prior is for {} nodes, network has {}",
                prior.node_count(),
                network.node_count()
            )));
        }
        if kind.uses_rw_tau() {
            if self.tau_widths.len() != c {
                return Err(GlpmError::ConfigMismatch(format!(
                    "{kind} needs {c} τ random-walk widths, got {}",
                    self.tau_widths.len()
                )));
            }
            if self.tau_widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(GlpmError::InvalidParameter("τ widths must be positive".into()));
            }
        }
        MwgConfig::new(self.mwg.delta)?;
        HmcConfig::new(self.hmc.epsilon, self.hmc.leap_count)?;
        Ok(())
    }
}

/// `τ⁰_c`: observed edge fraction of category `c`, clipped to `[0.01, 0.99]`.
pub fn initial_tau(network: &Network, prior: &PriorSpec) -> Vec<f64> {
    network
        .edge_count_per_category()
        .iter()
        .zip(network.observed_count_per_category())
        .enumerate()
        .map(|(c, (&edges, observed))| {
            let raw = if observed == 0 {
                prior.tau_alpha[c] / (prior.tau_alpha[c] + prior.tau_beta[c])
            } else {
                edges as f64 / observed as f64
            };
            raw.clamp(0.01, 0.99)
        })
        .collect()
}

/// `γ²⁰`: the prior mean when it exists, else 1.
pub fn initial_gamma2(prior: &PriorSpec) -> f64 {
    if prior.gamma_a > 1.0 {
        prior.gamma_b / (prior.gamma_a - 1.0)
    } else {
        1.0
    }
}

/// Deterministic (given `rng`) starting state: a prior draw of `Z*` improved
/// by `Σ`-preconditioned gradient ascent on the log posterior, with the step
/// halved whenever a step fails to increase it.
pub fn initialize<R: rand::Rng + ?Sized>(
    network: &Network,
    prior: &PriorSpec,
    op: &PrecisionOperator,
    ascent_steps: usize,
    rng: &mut R,
) -> Result<GlpmState> {
    let tau = initial_tau(network, prior);
    let gamma2 = op.gamma2();
    let mut z = sample_prior_positions(prior, gamma2, rng);
    let mut grad = Array2::zeros(z.raw_dim());
    let objective = |z: &Array2<f64>, grad: &mut Array2<f64>| -> f64 {
        let lp0 = log_p0_with_grad(z, &tau, network, None, grad);
        lp0 - op.quadratic_form(z).expect("dimensions match")
    };
    let mut current = objective(&z, &mut grad);
    let mut step = 1.0;
    for _ in 0..ascent_steps {
        // Σ⁻¹(−ΣZ + ∇log P0) = −Z + Σ⁻¹∇log P0.
        let mut direction = grad.clone();
        op.solve_in_place(&mut direction);
        direction -= &z;
        let candidate = &z + &(&direction * step);
        let mut candidate_grad = Array2::zeros(z.raw_dim());
        let value = objective(&candidate, &mut candidate_grad);
        if value.is_finite() && value > current {
            z = candidate;
            grad = candidate_grad;
            current = value;
        } else {
            step *= 0.5;
        }
    }
    GlpmState::new(z, tau, gamma2)
}

/// One chain as a state machine: the state plus everything the kernels cache.
pub struct Chain<'a> {
    kind: SamplerKind,
    network: &'a Network,
    prior: &'a PriorSpec,
    config: SamplerConfig,
    state: GlpmState,
    /// `Σ` at the last γ² it was built for; MwG never reads it, so it is only
    /// rebuilt on demand there.
    op: PrecisionOperator,
    bright: Option<BrightSet>,
    rng: ChaCha8Rng,
    hmc_work: HmcWorkspace,
    pub timings: PhaseTimings,
    pub acceptance: AcceptanceStats,
}

impl<'a> Chain<'a> {
    pub fn new(
        kind: SamplerKind,
        network: &'a Network,
        prior: &'a PriorSpec,
        config: SamplerConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate(kind, network, prior)?;
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = PrecisionOperator::build_with(
            prior,
            &network.laplacian(),
            initial_gamma2(prior),
            config.backend,
        )?;
        let state = initialize(network, prior, &op, config.init_ascent_steps, &mut rng)?;
        let bright = (kind == SamplerKind::SplitHmcFlymc)
            .then(|| BrightSet::sample(network, &state.tau, &mut rng));
        let timings = PhaseTimings {
            initialization: start.elapsed().as_secs_f64(),
            ..PhaseTimings::default()
        };
        Ok(Chain {
            kind,
            network,
            prior,
            acceptance: AcceptanceStats::new(network.num_categories()),
            config,
            state,
            op,
            bright,
            rng,
            hmc_work: HmcWorkspace::default(),
            timings,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn state(&self) -> &GlpmState {
        &self.state
    }

    pub fn bright(&self) -> Option<&BrightSet> {
        self.bright.as_ref()
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Changes step sizes between iterations (used by the tuner).
    pub fn set_config(&mut self, config: SamplerConfig) -> Result<()> {
        config.validate(self.kind, self.network, self.prior)?;
        self.config = config;
        Ok(())
    }

    pub fn reset_stats(&mut self) {
        self.acceptance = AcceptanceStats::new(self.network.num_categories());
        self.timings = PhaseTimings::default();
    }

    /// `Σ` at the current `γ²`.
    pub fn operator(&mut self) -> Result<&PrecisionOperator> {
        self.refresh_operator()?;
        Ok(&self.op)
    }

    fn refresh_operator(&mut self) -> Result<()> {
        if self.op.gamma2() != self.state.gamma2 {
            self.op = self.op.rebuild(self.state.gamma2)?;
        }
        Ok(())
    }

    /// One full iteration in the fixed update order of `kind`.
    pub fn step(&mut self) -> Result<()> {
        let t = Instant::now();
        match self.kind {
            SamplerKind::Mwg => {
                let accepted = mwg_sweep(
                    &mut self.state,
                    self.network,
                    self.prior,
                    &self.config.mwg,
                    &mut self.rng,
                );
                self.acceptance.position_accepted += accepted as u64;
                self.acceptance.position_proposed += self.state.node_count() as u64;
            }
            SamplerKind::SplitHmc | SamplerKind::SplitHmcFlymc => {
                if let Some(bright) = self.bright.as_mut() {
                    self.acceptance.singular_darkened += darken_singular(&self.state, bright) as u64;
                }
                let outcome = split_hmc_step(
                    &mut self.state,
                    self.network,
                    &self.op,
                    &self.config.hmc,
                    self.bright.as_ref(),
                    &mut self.hmc_work,
                    &mut self.rng,
                );
                self.acceptance.position_accepted += outcome.accepted as u64;
                self.acceptance.position_proposed += 1;
                self.acceptance.hmc_non_finite += outcome.non_finite as u64;
            }
        }
        self.timings.positions += lap(t);

        if let Some(bright) = self.bright.as_mut() {
            let t = Instant::now();
            let (lit, darkened) = flymc_sweep(&self.state, self.network, bright, &mut self.rng);
            self.acceptance.flymc_brightened += lit as u64;
            self.acceptance.flymc_darkened += darkened as u64;
            self.timings.flymc += lap(t);

            let t = Instant::now();
            self.state.tau = gibbs_tau(self.prior, bright, self.network, &mut self.rng);
            self.timings.tau += lap(t);
        } else {
            let t = Instant::now();
            let flags = rw_tau(
                &mut self.state,
                self.network,
                self.prior,
                &self.config.tau_widths,
                &mut self.rng,
            );
            for (c, ok) in flags.into_iter().enumerate() {
                self.acceptance.tau_accepted[c] += ok as u64;
                self.acceptance.tau_proposed[c] += 1;
            }
            self.timings.tau += lap(t);
        }

        let t = Instant::now();
        self.state.gamma2 = gibbs_gamma2(self.prior, &self.state.positions, &mut self.rng);
        self.timings.gamma2 += lap(t);

        if self.kind != SamplerKind::Mwg {
            let t = Instant::now();
            self.refresh_operator()?;
            self.timings.rebuild += lap(t);
        }
        Ok(())
    }
}

fn lap(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Darkens bright dyads whose endpoints coincide (their restricted term is −∞).
fn darken_singular(state: &GlpmState, bright: &mut BrightSet) -> usize {
    let singular: Vec<_> = bright
        .bright_iter()
        .filter(|(_, d)| sq_dist(&state.positions, d.i, d.j) == 0.0)
        .collect();
    for &(c, d) in &singular {
        bright.set(d, c, false);
    }
    singular.len()
}

/// Runs `iterations` full iterations and records the initial state plus every
/// `thin`-th state after it.
pub fn run_sampler(
    kind: SamplerKind,
    network: &Network,
    prior: &PriorSpec,
    config: &SamplerConfig,
    iterations: usize,
    thin: usize,
    seed: u64,
) -> Result<ChainOutput> {
    if thin == 0 {
        return Err(GlpmError::InvalidParameter("thin must be at least 1".into()));
    }
    let mut chain = Chain::new(kind, network, prior, config.clone(), seed)?;
    let mut out = ChainOutput::start(kind, seed, network, config, iterations, thin, chain.state());
    for it in 1..=iterations {
        chain.step()?;
        if it % thin == 0 {
            out.record(chain.state());
        }
    }
    out.finish(chain.timings.clone(), chain.acceptance.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Network, PriorSpec) {
        let net = Network::new(5, 1, &[(0, 1), (1, 2), (3, 4), (0, 4)], &[], &[]).unwrap();
        let prior = PriorSpec::standard(5, 1);
        (net, prior)
    }

    #[test]
    fn zero_iterations_keep_only_the_initial_state() {
        let (net, prior) = toy();
        for kind in SamplerKind::ALL {
            let out = run_sampler(kind, &net, &prior, &SamplerConfig::new(1), 0, 1, 4).unwrap();
            assert_eq!(out.draw_count(), 1);
        }
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let (net, prior) = toy();
        for kind in SamplerKind::ALL {
            let a = run_sampler(kind, &net, &prior, &SamplerConfig::new(1), 30, 3, 17).unwrap();
            let b = run_sampler(kind, &net, &prior, &SamplerConfig::new(1), 30, 3, 17).unwrap();
            assert_eq!(a.draw_count(), 11);
            assert_eq!(a.positions_flat(), b.positions_flat());
            assert_eq!(a.tau, b.tau);
            assert_eq!(a.gamma2, b.gamma2);
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SamplerKind::ALL {
            assert_eq!(kind.name().parse::<SamplerKind>().unwrap(), kind);
        }
        assert!("nuts".parse::<SamplerKind>().is_err());
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let (net, prior) = toy();
        let mut cfg = SamplerConfig::new(1);
        cfg.tau_widths = vec![0.1, 0.1];
        assert!(matches!(
            run_sampler(SamplerKind::Mwg, &net, &prior, &cfg, 1, 1, 0),
            Err(GlpmError::ConfigMismatch(_))
        ));
        // The Gibbs τ update ignores the widths.
        assert!(run_sampler(SamplerKind::SplitHmcFlymc, &net, &prior, &cfg, 1, 1, 0).is_ok());
    }

    #[test]
    fn initial_values() {
        let (net, prior) = toy();
        assert_eq!(initial_tau(&net, &prior), vec![0.4]);
        assert_eq!(initial_gamma2(&prior), 1.0);
        let p2 = PriorSpec::new(prior.omega().clone(), vec![1.0], vec![1.0], 3.0, 4.0, 2).unwrap();
        assert_eq!(initial_gamma2(&p2), 2.0);
    }
}
