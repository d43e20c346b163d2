//! Metropolis-within-Gibbs baseline: one box proposal per node.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::model::{log1mexp, GlpmState};
use crate::network::{DyadStatus, Network};
use crate::precision::PriorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwgConfig {
    /// Half-width of the uniform box around the current position.
    pub delta: f64,
}

impl MwgConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(GlpmError::InvalidParameter(format!("MwG needs δ > 0 (got {delta})")));
        }
        Ok(MwgConfig { delta })
    }
}

impl Default for MwgConfig {
    fn default() -> Self {
        MwgConfig { delta: 0.5 }
    }
}

/// Log acceptance ratio for replacing row `i` of `Z*` by `proposal`.
///
/// Touches only the prior entries in row `i` of `Ω` and the dyads containing `i`.
pub fn mwg_log_ratio(
    state: &GlpmState,
    network: &Network,
    prior: &PriorSpec,
    i: usize,
    proposal: &[f64],
) -> f64 {
    let z = &state.positions;
    let d = z.ncols();
    let zs = z.as_slice().expect("positions are row-major");
    let current = &zs[i * d..(i + 1) * d];

    // Prior: −(1/2γ²)[Q(z′) − Q(z)], Q(x) = Ω_ii x² + 2x Σ_{j≠i} Ω_ij z_j, per column.
    let mut prior_delta = 0.0;
    let mut omega_ii = 0.0;
    let mut cross = vec![0.0; d];
    for (j, w) in prior.omega().column(i) {
        if j == i {
            omega_ii = w;
        } else {
            for k in 0..d {
                cross[k] += w * zs[j * d + k];
            }
        }
    }
    for k in 0..d {
        let (new, old) = (proposal[k], current[k]);
        prior_delta += omega_ii * (new * new - old * old) + 2.0 * (new - old) * cross[k];
    }
    let mut log_ratio = -0.5 * prior_delta / state.gamma2;

    let log_tau: Vec<f64> = state.tau.iter().map(|t| t.ln()).collect();
    let row_base = i * i.saturating_sub(1) / 2;
    for j in 0..network.node_count() {
        if j == i {
            continue;
        }
        let idx = if j < i { row_base + j } else { j * (j - 1) / 2 + i };
        let status = network.status_at(idx);
        if status == DyadStatus::Unobserved {
            continue;
        }
        let zj = &zs[j * d..(j + 1) * d];
        let mut s_new = 0.0;
        let mut s_old = 0.0;
        for k in 0..d {
            s_new += (proposal[k] - zj[k]) * (proposal[k] - zj[k]);
            s_old += (current[k] - zj[k]) * (current[k] - zj[k]);
        }
        if status == DyadStatus::Edge {
            log_ratio -= 0.5 * (s_new - s_old);
        } else {
            let lt = log_tau[network.category_at(idx)];
            log_ratio += log1mexp(0.5 * s_new - lt) - log1mexp(0.5 * s_old - lt);
        }
    }
    log_ratio
}

/// One systematic-scan sweep over the nodes. Returns the number of accepted moves.
pub fn mwg_sweep<R: Rng + ?Sized>(
    state: &mut GlpmState,
    network: &Network,
    prior: &PriorSpec,
    cfg: &MwgConfig,
    rng: &mut R,
) -> usize {
    let (n, d) = state.positions.dim();
    let mut proposal = vec![0.0; d];
    let mut accepted = 0;
    for i in 0..n {
        for (k, p) in proposal.iter_mut().enumerate() {
            *p = state.positions[[i, k]] + rng.random_range(-cfg.delta..cfg.delta);
        }
        let log_ratio = mwg_log_ratio(state, network, prior, i, &proposal);
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            for (k, p) in proposal.iter().enumerate() {
                state.positions[[i, k]] = *p;
            }
            accepted += 1;
        }
    }
    accepted
}

/// Replaces row `i` (test helper for ratio checks).
pub fn with_row(z: &Array2<f64>, i: usize, row: &[f64]) -> Array2<f64> {
    let mut out = z.clone();
    for (k, v) in row.iter().enumerate() {
        out[[i, k]] = *v;
    }
    out
}
