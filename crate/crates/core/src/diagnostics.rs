//! Chain records, effective sample sizes and ESS-per-second comparisons.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::model::GlpmState;
use crate::network::{Dyad, Network};
use crate::samplers::{SamplerConfig, SamplerKind};

/// Shortest series [`effective_sample_size`] accepts.
pub const MIN_SERIES_LEN: usize = 10;
/// ESS is capped at this multiple of the series length.
pub const ESS_CAP: f64 = 1.5;

/// Wall-clock seconds per phase of an iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub initialization: f64,
    pub positions: f64,
    pub flymc: f64,
    pub tau: f64,
    pub gamma2: f64,
    pub rebuild: f64,
}

impl PhaseTimings {
    /// Time spent generating the chain, excluding initialization.
    pub fn sampling_seconds(&self) -> f64 {
        self.positions + self.flymc + self.tau + self.gamma2 + self.rebuild
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub position_accepted: u64,
    pub position_proposed: u64,
    pub tau_accepted: Vec<u64>,
    pub tau_proposed: Vec<u64>,
    /// HMC trajectories rejected because the energy was not finite.
    pub hmc_non_finite: u64,
    pub flymc_brightened: u64,
    pub flymc_darkened: u64,
    /// Bright dyads darkened because their endpoints coincided.
    pub singular_darkened: u64,
}

impl AcceptanceStats {
    pub fn new(categories: usize) -> Self {
        AcceptanceStats {
            position_accepted: 0,
            position_proposed: 0,
            tau_accepted: vec![0; categories],
            tau_proposed: vec![0; categories],
            hmc_non_finite: 0,
            flymc_brightened: 0,
            flymc_darkened: 0,
            singular_darkened: 0,
        }
    }

    pub fn position_rate(&self) -> Option<f64> {
        rate(self.position_accepted, self.position_proposed)
    }

    pub fn tau_rates(&self) -> Vec<Option<f64>> {
        self.tau_accepted
            .iter()
            .zip(&self.tau_proposed)
            .map(|(&a, &p)| rate(a, p))
            .collect()
    }
}

fn rate(accepted: u64, proposed: u64) -> Option<f64> {
    (proposed > 0).then(|| accepted as f64 / proposed as f64)
}

/// Thinned draws of `(Z*, τ, γ²)` with timings and acceptance counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub kind: SamplerKind,
    pub seed: u64,
    pub network_fingerprint: u64,
    pub config: SamplerConfig,
    pub iterations: usize,
    pub thin: usize,
    pub n: usize,
    pub d: usize,
    /// Row-major `draws × n × d`.
    positions: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
    pub gamma2: Vec<f64>,
    pub timings: PhaseTimings,
    pub acceptance: AcceptanceStats,
}

impl ChainOutput {
    pub(crate) fn start(
        kind: SamplerKind,
        seed: u64,
        network: &Network,
        config: &SamplerConfig,
        iterations: usize,
        thin: usize,
        initial: &GlpmState,
    ) -> Self {
        let draws = 1 + iterations / thin;
        let (n, d) = initial.positions.dim();
        let mut out = ChainOutput {
            kind,
            seed,
            network_fingerprint: network.fingerprint(),
            config: config.clone(),
            iterations,
            thin,
            n,
            d,
            positions: Vec::with_capacity(draws * n * d),
            tau: Vec::with_capacity(draws),
            gamma2: Vec::with_capacity(draws),
            timings: PhaseTimings::default(),
            acceptance: AcceptanceStats::new(initial.tau.len()),
        };
        out.record(initial);
        out
    }

    pub(crate) fn record(&mut self, state: &GlpmState) {
        self.positions.extend(state.positions.iter());
        self.tau.push(state.tau.clone());
        self.gamma2.push(state.gamma2);
    }

    pub(crate) fn finish(&mut self, timings: PhaseTimings, acceptance: AcceptanceStats) {
        self.timings = timings;
        self.acceptance = acceptance;
    }

    pub fn draw_count(&self) -> usize {
        self.gamma2.len()
    }

    pub fn positions_at(&self, draw: usize) -> ArrayView2<'_, f64> {
        let size = self.n * self.d;
        ArrayView2::from_shape((self.n, self.d), &self.positions[draw * size..(draw + 1) * size])
            .expect("draw is n × d")
    }

    pub fn positions_flat(&self) -> &[f64] {
        &self.positions
    }

    pub fn sampling_seconds(&self) -> f64 {
        self.timings.sampling_seconds()
    }

    /// `f = log τ_c − ½‖z*_i − z*_j‖²` at every recorded draw from `skip` on.
    pub fn dyad_series(&self, dyad: Dyad, category: usize, skip: usize) -> Vec<f64> {
        let size = self.n * self.d;
        (skip..self.draw_count())
            .map(|k| {
                let z = &self.positions[k * size..(k + 1) * size];
                let (a, b) = (&z[dyad.i * self.d..][..self.d], &z[dyad.j * self.d..][..self.d]);
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                dyad_log_prob(self.tau[k][category], s)
            })
            .collect()
    }
}

/// The dyad functional `log τ_c − s/2`.
#[inline]
pub fn dyad_log_prob(tau_c: f64, sq_dist: f64) -> f64 {
    tau_c.ln() - 0.5 * sq_dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// Sample autocorrelations `ρ_0 … ρ_{lag−1}` that entered the sum.
    pub autocorrelations: Vec<f64>,
    /// Number of lags used; always even.
    pub truncation_lag: usize,
    /// The series had zero variance; `ess` is 0.
    pub degenerate: bool,
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < MIN_SERIES_LEN {
        return Err(GlpmError::SeriesTooShort {
            len: series.len(),
            min: MIN_SERIES_LEN,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(GlpmError::InvalidParameter("series contains non-finite values".into()));
    }
    Ok(())
}

fn is_constant(series: &[f64]) -> bool {
    series.iter().all(|&v| v == series[0])
}

/// Biased sample autocovariances `γ̂_0 … γ̂_{N−1}` via zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf.iter().take(n).map(|c| c.re * scale).collect()
}

/// Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(series: &[f64]) -> Result<EssEstimate> {
    check_series(series)?;
    let n = series.len();
    if is_constant(series) {
        return Ok(EssEstimate {
            ess: 0.0,
            autocorrelations: Vec::new(),
            truncation_lag: 0,
            degenerate: true,
        });
    }
    let acov = autocovariance(series);
    let rho: Vec<f64> = acov.iter().map(|g| g / acov[0]).collect();

    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut pairs = 0;
    while 2 * pairs + 1 < n {
        let pair = rho[2 * pairs] + rho[2 * pairs + 1];
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(previous);
        sum += pair;
        previous = pair;
        pairs += 1;
    }
    let tau_int = (2.0 * sum - 1.0).max(1.0 / ESS_CAP);
    let lag = 2 * pairs;
    Ok(EssEstimate {
        ess: (n as f64 / tau_int).min(ESS_CAP * n as f64),
        autocorrelations: rho[..lag].to_vec(),
        truncation_lag: lag,
        degenerate: false,
    })
}

/// Spectral-density-at-zero ESS from an AR(p) fit (Yule–Walker, order by AIC),
/// the estimator popularized by R's coda. Used as a cross-check.
pub fn effective_sample_size_ar(series: &[f64]) -> Result<f64> {
    check_series(series)?;
    if is_constant(series) {
        return Ok(0.0);
    }
    let n = series.len();
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let acov = autocovariance(series);

    // Levinson–Durbin recursion, keeping the AIC-best order.
    let mut phi: Vec<f64> = Vec::new();
    let mut sigma2 = acov[0];
    let mut best = (n as f64 * sigma2.ln(), 0.0, sigma2);
    for p in 1..=max_order {
        let acc: f64 = phi.iter().enumerate().map(|(k, f)| f * acov[p - 1 - k]).sum();
        let kappa = (acov[p] - acc) / sigma2;
        let mut next = vec![0.0; p];
        for k in 0..p - 1 {
            next[k] = phi[k] - kappa * phi[p - 2 - k];
        }
        next[p - 1] = kappa;
        phi = next;
        sigma2 *= 1.0 - kappa * kappa;
        if sigma2 <= 0.0 {
            break;
        }
        let aic = n as f64 * sigma2.ln() + 2.0 * p as f64;
        if aic < best.0 {
            best = (aic, phi.iter().sum(), sigma2);
        }
    }
    let (_, phi_sum, innovation) = best;
    let spectrum0 = innovation / (1.0 - phi_sum).powi(2);
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(n as f64 * var / spectrum0)
}

/// `(ESS_t / ESS_b)·(sec_b / sec_t)`, undefined when either ESS is degenerate.
pub fn efficiency_ratio(
    ess_target: &EssEstimate,
    ess_baseline: &EssEstimate,
    seconds_target: f64,
    seconds_baseline: f64,
) -> Option<f64> {
    if ess_target.degenerate || ess_baseline.degenerate || ess_baseline.ess <= 0.0 {
        return None;
    }
    if !(seconds_target > 0.0 && seconds_baseline > 0.0) {
        return None;
    }
    Some(ess_target.ess / ess_baseline.ess * (seconds_baseline / seconds_target))
}

/// Median of the defined values; `None` when there are none.
pub fn median_defined(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadEfficiency {
    pub dyad: Dyad,
    /// 0-based category.
    pub category: usize,
    pub ess_target: f64,
    pub ess_baseline: f64,
    pub seconds_target: f64,
    pub seconds_baseline: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub rows: Vec<DyadEfficiency>,
    pub median: Option<f64>,
}

/// Per-dyad relative efficiency of `target` against `baseline` on the dyad
/// functional, after discarding the first `burn_in` recorded draws of each.
pub fn relative_efficiency(
    target: &ChainOutput,
    baseline: &ChainOutput,
    network: &Network,
    dyads: &[Dyad],
    burn_in: usize,
) -> Result<EfficiencyReport> {
    let fp = network.fingerprint();
    if target.network_fingerprint != fp || baseline.network_fingerprint != fp {
        return Err(GlpmError::ChainMismatch);
    }
    let (sec_t, sec_b) = (target.sampling_seconds(), baseline.sampling_seconds());
    let mut rows = Vec::with_capacity(dyads.len());
    for &dyad in dyads {
        if dyad.j >= network.node_count() || !network.is_observed(dyad) {
            return Err(GlpmError::InvalidParameter(format!(
                "dyad {{{}, {}}} is not an observed dyad",
                dyad.i + 1,
                dyad.j + 1
            )));
        }
        let c = network.category(dyad);
        let et = effective_sample_size(&target.dyad_series(dyad, c, burn_in))?;
        let eb = effective_sample_size(&baseline.dyad_series(dyad, c, burn_in))?;
        rows.push(DyadEfficiency {
            dyad,
            category: c,
            ess_target: et.ess,
            ess_baseline: eb.ess,
            seconds_target: sec_t,
            seconds_baseline: sec_b,
            ratio: efficiency_ratio(&et, &eb, sec_t, sec_b),
        });
    }
    let median = median_defined(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>());
    Ok(EfficiencyReport { rows, median })
}

/// Uniform sample of observed dyads without replacement, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadSample {
    pub dyads: Vec<Dyad>,
    /// Fewer observed dyads than requested existed; all of them were returned.
    pub exhausted: bool,
}

pub fn sample_dyads<R: Rng + ?Sized>(network: &Network, count: usize, rng: &mut R) -> DyadSample {
    let observed = network.observed_dyads();
    if count >= observed.len() {
        return DyadSample {
            exhausted: count > observed.len(),
            dyads: observed,
        };
    }
    let mut dyads: Vec<Dyad> = index::sample(rng, observed.len(), count)
        .into_iter()
        .map(|k| observed[k])
        .collect();
    dyads.sort_unstable_by_key(|d| d.index());
    DyadSample {
        dyads,
        exhausted: false,
    }
}
