//! Split HMC: the Gaussian part of the energy is integrated exactly by a
//! rotation, the non-edge term enters through momentum kicks.
//!
//! With `V = Σ⁻¹U` the Gaussian flow is `(Z, V) ↦ (Z cos t + V sin t, V cos t − Z sin t)`,
//! and `UᵀΣ⁻¹U = VᵀΣV`, so the whole trajectory lives in `(Z, V)`.

use ndarray::{Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::model::{log_p0_at, grad_log_p0_into, log_p0_with_grad, GlpmState};
use crate::network::Network;
use crate::precision::PrecisionOperator;
use crate::samplers::BrightSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub epsilon: f64,
    pub leap_count: usize,
}

impl HmcConfig {
    /// Trajectory length the tuner aims for.
    pub const TARGET_LENGTH: f64 = 2.0;

    pub fn new(epsilon: f64, leap_count: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || leap_count == 0 {
            return Err(GlpmError::InvalidParameter(format!(
                "HMC needs ε > 0 and L ≥ 1 (got ε = {epsilon}, L = {leap_count})"
            )));
        }
        Ok(HmcConfig { epsilon, leap_count })
    }

    /// `L = max(1, round(2/ε))`.
    pub fn with_target_length(epsilon: f64) -> Result<Self> {
        let leaps = (Self::TARGET_LENGTH / epsilon).round().max(1.0);
        Self::new(epsilon, if leaps.is_finite() { leaps as usize } else { 1 })
    }

    pub fn trajectory_length(&self) -> f64 {
        self.epsilon * self.leap_count as f64
    }
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            epsilon: 0.2,
            leap_count: 10,
        }
    }
}

/// Momenta `U` and the auxiliary `V = Σ⁻¹U`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumBlock {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl MomentumBlock {
    pub fn draw<R: Rng + ?Sized>(op: &PrecisionOperator, d: usize, rng: &mut R) -> Self {
        let u = op.sample_momentum(d, rng);
        let mut v = u.clone();
        op.solve_in_place(&mut v);
        MomentumBlock { u, v }
    }
}

/// Exact Gaussian flow for time `eps`.
pub fn rotate(z: &mut Array2<f64>, v: &mut Array2<f64>, eps: f64) {
    let (s, c) = eps.sin_cos();
    Zip::from(z).and(v).for_each(|z, v| {
        let (z0, v0) = (*z, *v);
        *z = s * v0 + c * z0;
        *v = c * v0 - s * z0;
    });
}

/// `L` split steps of half-kick, rotation, half-kick.
///
/// `kick(z, out)` writes `Σ⁻¹∇log P0(z)` into `out` and returns whether it
/// is finite. `kick_at_start` is that quantity at the initial `z`; on return
/// it holds the value at the final `z`, so consecutive calls share
/// evaluations. Returns `false` if the trajectory hit a non-finite gradient.
pub fn integrate(
    z: &mut Array2<f64>,
    v: &mut Array2<f64>,
    cfg: &HmcConfig,
    kick_at_start: &mut Array2<f64>,
    mut kick: impl FnMut(&Array2<f64>, &mut Array2<f64>) -> bool,
) -> bool {
    let half = 0.5 * cfg.epsilon;
    for _ in 0..cfg.leap_count {
        v.scaled_add(half, kick_at_start);
        rotate(z, v, cfg.epsilon);
        if !kick(z, kick_at_start) {
            return false;
        }
        v.scaled_add(half, kick_at_start);
    }
    true
}

/// Outcome of one split HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    /// `H(start) − H(end)`; `NaN` when the trajectory left the support.
    pub log_ratio: f64,
    pub non_finite: bool,
}

/// Reusable gradient buffers for [`split_hmc_step`].
#[derive(Debug, Clone, Default)]
pub struct HmcWorkspace {
    grad: Array2<f64>,
}

/// One split HMC transition on `Z*`; `τ`, `γ²` and θ are held fixed.
///
/// With `bright`, the non-edge term and its gradient are bright-restricted.
/// `op` must be built at `state.gamma2`.
#[allow(clippy::too_many_arguments)]
pub fn split_hmc_step<R: Rng + ?Sized>(
    state: &mut GlpmState,
    network: &Network,
    op: &PrecisionOperator,
    cfg: &HmcConfig,
    bright: Option<&BrightSet>,
    work: &mut HmcWorkspace,
    rng: &mut R,
) -> HmcOutcome {
    let d = state.dim();
    if work.grad.raw_dim() != state.positions.raw_dim() {
        work.grad = Array2::zeros(state.positions.raw_dim());
    }
    let mut v = MomentumBlock::draw(op, d, rng).v;

    let mut kick = Array2::zeros(state.positions.raw_dim());
    let logp_start = log_p0_with_grad(&state.positions, &state.tau, network, bright, &mut kick);
    op.solve_in_place(&mut kick);
    let h_start = -logp_start + gaussian_energy(op, &state.positions, &v);

    let mut z = state.positions.clone();
    let tau = &state.tau;
    let grad = &mut work.grad;
    let finite = integrate(&mut z, &mut v, cfg, &mut kick, |z, out| {
        let ok = grad_log_p0_into(z, tau, network, bright, grad);
        out.assign(grad);
        op.solve_in_place(out);
        ok
    });
    let logp_end = if finite { log_p0_at(&z, tau, network, bright) } else { f64::NAN };

    if !logp_end.is_finite() || z.iter().any(|x| !x.is_finite()) {
        return HmcOutcome {
            accepted: false,
            log_ratio: f64::NAN,
            non_finite: true,
        };
    }
    let h_end = -logp_end + gaussian_energy(op, &z, &v);
    let log_ratio = h_start - h_end;
    if !log_ratio.is_finite() {
        return HmcOutcome {
            accepted: false,
            log_ratio: f64::NAN,
            non_finite: true,
        };
    }
    let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accepted {
        state.positions = z;
    }
    HmcOutcome {
        accepted,
        log_ratio,
        non_finite: false,
    }
}

/// `½ Σ_ℓ (ZᵀΣZ + VᵀΣV)`.
pub fn gaussian_energy(op: &PrecisionOperator, z: &Array2<f64>, v: &Array2<f64>) -> f64 {
    op.quadratic_form(z).expect("dimensions match") + op.quadratic_form(v).expect("dimensions match")
}
