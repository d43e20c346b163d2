//! Pilot-run step-size tuning toward fixed acceptance-rate bands.
//!
//! Each round runs a short burn-in and a short pilot on one warm chain, then
//! rescales the step by `exp(κ·(observed − target_mid))`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::network::Network;
use crate::precision::PriorSpec;
use crate::samplers::{Chain, HmcConfig, SamplerConfig, SamplerKind};

pub const MIN_STEP: f64 = 1e-6;
pub const MAX_STEP: f64 = 1e2;
/// Pilot noise tolerated before a non-monotone response is logged.
const MONOTONE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneKernel {
    /// Box half-width δ of the MwG position update.
    Mwg,
    /// Split HMC step size ε (with `L = round(2/ε)`).
    Hmc,
    /// Random-walk half-widths of the `τ` updates.
    RwTau,
}

impl TuneKernel {
    /// Acceptance band `[lo, hi]`.
    pub fn band(self) -> (f64, f64) {
        match self {
            TuneKernel::Mwg | TuneKernel::RwTau => (0.2, 0.3),
            TuneKernel::Hmc => (0.8, 0.85),
        }
    }

    fn gain(self) -> f64 {
        match self {
            TuneKernel::Mwg | TuneKernel::RwTau => 2.0,
            TuneKernel::Hmc => 1.0,
        }
    }

    fn compatible_with(self, kind: SamplerKind) -> bool {
        match self {
            TuneKernel::Mwg => kind == SamplerKind::Mwg,
            TuneKernel::Hmc => kind != SamplerKind::Mwg,
            TuneKernel::RwTau => kind.uses_rw_tau(),
        }
    }
}

/// The multiplicative correction for one round.
pub fn correction(kernel: TuneKernel, step: f64, observed: f64) -> f64 {
    let (lo, hi) = kernel.band();
    let mid = 0.5 * (lo + hi);
    (step * (kernel.gain() * (observed - mid)).exp()).clamp(MIN_STEP, MAX_STEP)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub burn_in: usize,
    pub pilot: usize,
    pub max_rounds: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            burn_in: 100,
            pilot: 100,
            max_rounds: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub kernel: TuneKernel,
    /// δ, ε, or the first τ width.
    pub tuned_value: f64,
    /// Per-category widths for `RwTau`; a single entry otherwise.
    pub values: Vec<f64>,
    pub leap_count: Option<usize>,
    pub final_acceptance_rate: f64,
    pub pilot_rounds_used: usize,
    /// The round cap was reached without landing in the band.
    pub exhausted: bool,
    /// `(step, acceptance)` per round (first category for `RwTau`).
    pub trajectory: Vec<(f64, f64)>,
    pub monotonicity_violations: usize,
    pub seconds: f64,
}

fn apply(kernel: TuneKernel, config: &mut SamplerConfig, values: &[f64]) -> Result<()> {
    match kernel {
        TuneKernel::Mwg => config.mwg.delta = values[0],
        TuneKernel::Hmc => config.hmc = HmcConfig::with_target_length(values[0])?,
        TuneKernel::RwTau => config.tau_widths = values.to_vec(),
    }
    Ok(())
}

fn observed_rates(kernel: TuneKernel, chain: &Chain<'_>) -> Vec<f64> {
    match kernel {
        TuneKernel::Mwg | TuneKernel::Hmc => vec![chain.acceptance.position_rate().unwrap_or(0.0)],
        TuneKernel::RwTau => chain
            .acceptance
            .tau_rates()
            .into_iter()
            .map(|r| r.unwrap_or(0.0))
            .collect(),
    }
}

/// Tunes one kernel on a pilot chain of `kind`, all other settings taken from `base`.
#[allow(clippy::too_many_arguments)]
pub fn tune_step_size(
    kernel: TuneKernel,
    kind: SamplerKind,
    network: &Network,
    prior: &PriorSpec,
    base: &SamplerConfig,
    initial_value: f64,
    settings: &TuneSettings,
    seed: u64,
) -> Result<TuneResult> {
    if !kernel.compatible_with(kind) {
        return Err(GlpmError::ConfigMismatch(format!(
            "cannot tune {kernel:?} on a {kind} chain"
        )));
    }
    if !(initial_value > 0.0 && initial_value.is_finite()) {
        return Err(GlpmError::InvalidParameter(format!(
            "initial step {initial_value} must be positive"
        )));
    }
    let start = Instant::now();
    let width = if kernel == TuneKernel::RwTau { network.num_categories() } else { 1 };
    let mut values = vec![initial_value.clamp(MIN_STEP, MAX_STEP); width];
    let mut config = base.clone();
    apply(kernel, &mut config, &values)?;
    let mut chain = Chain::new(kind, network, prior, config.clone(), seed)?;
    let (lo, hi) = kernel.band();
    let mid = 0.5 * (lo + hi);

    let mut trajectory = Vec::new();
    let mut violations = 0;
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut rounds = 0;
    let mut landed = false;
    let mut last_rate = f64::NAN;
    while rounds < settings.max_rounds {
        rounds += 1;
        apply(kernel, &mut config, &values)?;
        chain.set_config(config.clone())?;
        for _ in 0..settings.burn_in {
            chain.step()?;
        }
        chain.reset_stats();
        for _ in 0..settings.pilot {
            chain.step()?;
        }
        let rates = observed_rates(kernel, &chain);
        let gap: f64 = rates.iter().map(|r| (r - mid).abs()).fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, values.clone(), rates[0]));
        }
        if let Some(&(prev_step, prev_rate)) = trajectory.last() {
            let step_up = values[0] > prev_step;
            let rate_up = rates[0] > prev_rate + MONOTONE_SLACK;
            let rate_down = rates[0] < prev_rate - MONOTONE_SLACK;
            if (step_up && rate_up) || (!step_up && values[0] < prev_step && rate_down) {
                violations += 1;
                log::warn!(
                    "{kernel:?} tuning: acceptance {prev_rate:.3} -> {:.3} moved with the step \
                     {prev_step:.4} -> {:.4}",
                    rates[0],
                    values[0]
                );
            }
        }
        trajectory.push((values[0], rates[0]));
        last_rate = rates[0];
        if rates.iter().all(|r| (lo..=hi).contains(r)) {
            landed = true;
            break;
        }
        for (v, r) in values.iter_mut().zip(&rates) {
            if !(lo..=hi).contains(r) {
                *v = correction(kernel, *v, *r);
            }
        }
    }

    let (final_values, final_rate) = if landed {
        (values, last_rate)
    } else {
        let (_, v, r) = best.expect("at least one round ran");
        (v, r)
    };
    let leap_count = (kernel == TuneKernel::Hmc)
        .then(|| HmcConfig::with_target_length(final_values[0]).map(|c| c.leap_count))
        .transpose()?;
    Ok(TuneResult {
        kernel,
        tuned_value: final_values[0],
        values: final_values,
        leap_count,
        final_acceptance_rate: final_rate,
        pilot_rounds_used: rounds,
        exhausted: !landed,
        trajectory,
        monotonicity_violations: violations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Tuned configuration for a full sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedSampler {
    pub kind: SamplerKind,
    pub config: SamplerConfig,
    pub results: Vec<TuneResult>,
    pub seconds: f64,
}

/// Tunes the position kernel of `kind`, then the `τ` widths when `kind` uses them.
pub fn tune_sampler(
    kind: SamplerKind,
    network: &Network,
    prior: &PriorSpec,
    base: &SamplerConfig,
    settings: &TuneSettings,
    seed: u64,
) -> Result<TunedSampler> {
    let mut config = base.clone();
    let mut results = Vec::new();
    let (kernel, initial) = match kind {
        SamplerKind::Mwg => (TuneKernel::Mwg, base.mwg.delta),
        _ => (TuneKernel::Hmc, base.hmc.epsilon),
    };
    let r = tune_step_size(kernel, kind, network, prior, &config, initial, settings, seed)?;
    apply(kernel, &mut config, &r.values)?;
    results.push(r);
    if kind.uses_rw_tau() {
        let initial = base.tau_widths.first().copied().unwrap_or(0.05);
        let r = tune_step_size(
            TuneKernel::RwTau,
            kind,
            network,
            prior,
            &config,
            initial,
            settings,
            seed.wrapping_add(1),
        )?;
        apply(TuneKernel::RwTau, &mut config, &r.values)?;
        results.push(r);
    }
    let seconds = results.iter().map(|r| r.seconds).sum();
    Ok(TunedSampler {
        kind,
        config,
        results,
        seconds,
    })
}
