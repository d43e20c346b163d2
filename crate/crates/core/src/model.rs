//! Densities and gradients of the reparameterized model.
//!
//! Positions `Z*` carry the scale: their prior precision is `Ω/γ²` per column
//! and the link is `τ_c·exp(−½‖z*_i − z*_j‖²)`. All log densities are
//! unnormalized; constants that do not depend on `(Z*, τ, γ²)` are dropped
//! everywhere, so differences between states are exact.

use ndarray::Array2;

use crate::error::{GlpmError, Result};
use crate::network::{Dyad, DyadStatus, Network};
use crate::precision::{PrecisionOperator, PriorSpec};
use crate::samplers::BrightSet;

/// Largest network [`marginal_vs_augmented_check`] will enumerate.
pub const MAX_ENUMERABLE_NODES: usize = 6;

/// Current point of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GlpmState {
    /// `n × d`, row-major.
    pub positions: Array2<f64>,
    pub tau: Vec<f64>,
    pub gamma2: f64,
}

impl GlpmState {
    pub fn new(positions: Array2<f64>, tau: Vec<f64>, gamma2: f64) -> Result<Self> {
        if tau.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(GlpmError::InvalidParameter(format!("τ = {tau:?} must lie in (0, 1)")));
        }
        if !(gamma2 > 0.0 && gamma2.is_finite()) {
            return Err(GlpmError::InvalidParameter(format!("γ² = {gamma2} must be positive")));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(GlpmError::InvalidParameter("positions must be finite".into()));
        }
        Ok(GlpmState {
            positions: positions.as_standard_layout().into_owned(),
            tau,
            gamma2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    fn check(&self, network: &Network) -> Result<()> {
        if self.node_count() != network.node_count() {
            return Err(GlpmError::dims(
                format!("{} position rows", network.node_count()),
                self.node_count(),
            ));
        }
        if self.tau.len() != network.num_categories() {
            return Err(GlpmError::dims(
                format!("{} τ values", network.num_categories()),
                self.tau.len(),
            ));
        }
        Ok(())
    }
}

/// `τ_c·exp(−s/2)`.
#[inline]
pub fn link_prob(tau_c: f64, sq_dist: f64) -> f64 {
    tau_c * (-0.5 * sq_dist).exp()
}

/// `log(1 − e^{−a})` for `a ≥ 0`, accurate at both ends.
#[inline]
pub fn log1mexp(a: f64) -> f64 {
    if a <= std::f64::consts::LN_2 {
        (-(-a).exp_m1()).ln()
    } else {
        (-(-a).exp()).ln_1p()
    }
}

/// `q/(1 − q)` with `q = e^{−a}`: the non-edge gradient weight.
#[inline]
fn odds_weight(a: f64) -> f64 {
    // `exp` is much cheaper than `expm1`; `1 − q` only loses accuracy near `a = 0`.
    if a > 0.25 {
        let q = (-a).exp();
        q / (1.0 - q)
    } else {
        1.0 / a.exp_m1()
    }
}

#[inline]
pub(crate) fn sq_dist(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    let d = z.ncols();
    let data = z.as_slice().expect("positions are row-major");
    let (a, b) = (&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log P1 = Σ_edges log τ_c − ½ Σ_ℓ Z*ᵀ Σ Z*`; `op` must be built at `state.gamma2`.
pub fn log_p1(state: &GlpmState, network: &Network, op: &PrecisionOperator) -> Result<f64> {
    state.check(network)?;
    let edge_part: f64 = network
        .edge_count_per_category()
        .iter()
        .zip(&state.tau)
        .map(|(&k, t)| k as f64 * t.ln())
        .sum();
    Ok(edge_part - op.quadratic_form(&state.positions)?)
}

/// Non-edge log-likelihood, all observed non-edges or only the bright ones.
/// The bright-restricted terms drop `τ` (it moves into the θ counts). A bright
/// dyad at distance zero gives `−∞`.
pub fn log_p0(state: &GlpmState, network: &Network, bright: Option<&BrightSet>) -> Result<f64> {
    state.check(network)?;
    Ok(log_p0_at(&state.positions, &state.tau, network, bright))
}

/// `∇_{Z*} log P0` as an `n × d` matrix.
pub fn grad_log_p0(
    state: &GlpmState,
    network: &Network,
    bright: Option<&BrightSet>,
) -> Result<Array2<f64>> {
    state.check(network)?;
    let mut grad = Array2::zeros(state.positions.raw_dim());
    accumulate_p0(&state.positions, &state.tau, network, bright, Some(&mut grad));
    Ok(grad)
}

/// `log P0` and its gradient at row-major positions `z` in one pass;
/// `grad` is overwritten. Dimensions are not checked.
pub fn log_p0_with_grad(
    z: &Array2<f64>,
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
    grad: &mut Array2<f64>,
) -> f64 {
    grad.fill(0.0);
    accumulate_p0(z, tau, network, bright, Some(grad))
}

/// `log P0` alone at row-major positions `z`; dimensions are not checked.
pub fn log_p0_at(z: &Array2<f64>, tau: &[f64], network: &Network, bright: Option<&BrightSet>) -> f64 {
    let zs = z.as_slice().expect("positions are row-major");
    match z.ncols() {
        1 => value_pass::<1>(zs, 1, tau, network, bright),
        2 => value_pass::<2>(zs, 2, tau, network, bright),
        3 => value_pass::<3>(zs, 3, tau, network, bright),
        d => value_pass::<0>(zs, d, tau, network, bright),
    }
}

/// Gradient-only variant of [`log_p0_with_grad`] (one `expm1` per dyad).
/// Returns `false` when the gradient is not finite.
pub fn grad_log_p0_into(
    z: &Array2<f64>,
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
    grad: &mut Array2<f64>,
) -> bool {
    grad.fill(0.0);
    let zs = z.as_slice().expect("positions are row-major");
    let gs = grad.as_slice_mut().expect("gradient is row-major");
    match z.ncols() {
        1 => grad_pass::<1>(zs, 1, tau, network, bright, gs),
        2 => grad_pass::<2>(zs, 2, tau, network, bright, gs),
        3 => grad_pass::<3>(zs, 3, tau, network, bright, gs),
        d => grad_pass::<0>(zs, d, tau, network, bright, gs),
    }
    gs.iter().all(|g| g.is_finite())
}

/// Calls `f(i, j, log τ)` for every dyad in the non-edge term.
#[inline(always)]
fn for_each_p0_dyad(
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
    mut f: impl FnMut(usize, usize, f64),
) {
    match bright {
        Some(set) => {
            for (_, dyad) in set.bright_iter() {
                f(dyad.i, dyad.j, 0.0);
            }
        }
        None => {
            for (c, t) in tau.iter().enumerate() {
                let log_tau = t.ln();
                for dyad in network.non_edges_in_category(c).expect("τ has one entry per category") {
                    f(dyad.i, dyad.j, log_tau);
                }
            }
        }
    }
}

#[inline(always)]
fn value_pass<const D: usize>(
    zs: &[f64],
    d: usize,
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
) -> f64 {
    let d = if D == 0 { d } else { D };
    let mut total = 0.0;
    for_each_p0_dyad(tau, network, bright, |i, j, log_tau| {
        let (zi, zj) = (&zs[i * d..(i + 1) * d], &zs[j * d..(j + 1) * d]);
        let mut s = 0.0;
        for k in 0..d {
            s += (zi[k] - zj[k]) * (zi[k] - zj[k]);
        }
        total += log1mexp(0.5 * s - log_tau);
    });
    total
}

/// `D = 0` means "use the runtime `d`"; fixed `D` lets the inner loops unroll.
#[inline(always)]
fn grad_pass<const D: usize>(
    zs: &[f64],
    d: usize,
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
    gs: &mut [f64],
) {
    let d = if D == 0 { d } else { D };
    for_each_p0_dyad(tau, network, bright, |i, j, log_tau| {
        let (zi, zj) = (&zs[i * d..(i + 1) * d], &zs[j * d..(j + 1) * d]);
        let mut s = 0.0;
        for k in 0..d {
            s += (zi[k] - zj[k]) * (zi[k] - zj[k]);
        }
        let w = odds_weight(0.5 * s - log_tau);
        for k in 0..d {
            let delta = w * (zi[k] - zj[k]);
            gs[i * d + k] += delta;
            gs[j * d + k] -= delta;
        }
    });
}

fn accumulate_p0(
    z: &Array2<f64>,
    tau: &[f64],
    network: &Network,
    bright: Option<&BrightSet>,
    mut grad: Option<&mut Array2<f64>>,
) -> f64 {
    let d = z.ncols();
    let zs = z.as_slice().expect("positions are row-major");
    let mut gs = grad.as_deref_mut().map(|g| g.as_slice_mut().expect("gradient is row-major"));
    let mut total = 0.0;
    for_each_p0_dyad(tau, network, bright, |i, j, log_tau| {
        let (zi, zj) = (&zs[i * d..(i + 1) * d], &zs[j * d..(j + 1) * d]);
        let s: f64 = zi.iter().zip(zj).map(|(x, y)| (x - y) * (x - y)).sum();
        let a = 0.5 * s - log_tau;
        total += log1mexp(a);
        if let Some(gs) = gs.as_deref_mut() {
            let w = odds_weight(a);
            for k in 0..d {
                let delta = w * (zi[k] - zj[k]);
                gs[i * d + k] += delta;
                gs[j * d + k] -= delta;
            }
        }
    });
    total
}

/// Log prior of `(τ, γ²)` plus the `γ²`-dependent normalizer of the position prior.
pub fn log_prior_params(state: &GlpmState, prior: &PriorSpec) -> f64 {
    let tau_part: f64 = state
        .tau
        .iter()
        .zip(prior.tau_alpha.iter().zip(&prior.tau_beta))
        .map(|(t, (a, b))| (a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p())
        .sum();
    let g = state.gamma2;
    let nd = (state.node_count() * state.dim()) as f64;
    tau_part - (prior.gamma_a + 1.0) * g.ln() - prior.gamma_b / g - 0.5 * nd * g.ln()
}

/// Unnormalized log posterior of `(Z*, τ, γ²)`.
pub fn log_posterior(
    state: &GlpmState,
    network: &Network,
    prior: &PriorSpec,
    op: &PrecisionOperator,
) -> Result<f64> {
    if (op.gamma2() - state.gamma2).abs() > 1e-12 * state.gamma2 {
        return Err(GlpmError::InvalidParameter(format!(
            "operator built at γ² = {} but state has γ² = {}",
            op.gamma2(),
            state.gamma2
        )));
    }
    Ok(log_p1(state, network, op)? + log_p0(state, network, None)? + log_prior_params(state, prior))
}

/// Log-likelihood of the observed dyads computed two ways: directly, and by
/// summing the θ-augmented joint over every θ configuration (edges included,
/// where θ = 0 has zero mass). Returns `(marginal, augmented)`.
pub fn marginal_vs_augmented_check(state: &GlpmState, network: &Network) -> Result<(f64, f64)> {
    state.check(network)?;
    let n = network.node_count();
    if n > MAX_ENUMERABLE_NODES {
        return Err(GlpmError::TooLargeToEnumerate {
            n,
            max: MAX_ENUMERABLE_NODES,
        });
    }
    let z = &state.positions;
    let dyads = network.observed_dyads();

    let mut marginal = 0.0;
    // log p(A_ij, θ_ij) for θ = 0 and θ = 1.
    let mut joint: Vec<[f64; 2]> = Vec::with_capacity(dyads.len());
    for &Dyad { i, j } in &dyads {
        let tau = state.tau[network.category(Dyad { i, j })];
        let s = sq_dist(z, i, j);
        if network.status(Dyad { i, j }) == DyadStatus::Edge {
            let log_q = tau.ln() - 0.5 * s;
            marginal += log_q;
            joint.push([f64::NEG_INFINITY, log_q]);
        } else {
            marginal += log1mexp(0.5 * s - tau.ln());
            joint.push([(-tau).ln_1p(), tau.ln() + log1mexp(0.5 * s)]);
        }
    }

    let terms: Vec<f64> = (0u64..1 << dyads.len())
        .map(|mask| {
            joint
                .iter()
                .enumerate()
                .map(|(k, pair)| pair[((mask >> k) & 1) as usize])
                .sum()
        })
        .collect();
    Ok((marginal, log_sum_exp(&terms)))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::build_precision;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn link_prob_examples() {
        assert_eq!(link_prob(1.0, 0.0), 1.0);
        assert_eq!(link_prob(0.5, 0.0), 0.5);
        assert_abs_diff_eq!(link_prob(0.2, 2.0), 0.0735759, epsilon = 1e-7);
    }

    #[test]
    fn log1mexp_matches_naive_in_the_middle() {
        for a in [0.01, 0.3, 0.69, 0.7, 2.0, 10.0] {
            assert_abs_diff_eq!(log1mexp(a), (1.0 - (-a).exp()).ln(), epsilon = 1e-13);
        }
        assert_eq!(log1mexp(0.0), f64::NEG_INFINITY);
        assert!((log1mexp(1e-20) - (1e-20f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_p1_examples() {
        let empty = Network::new(3, 1, &[], &[], &[]).unwrap();
        let prior = PriorSpec::standard(3, 1);
        let st = GlpmState::new(Array2::zeros((3, 2)), vec![0.5], 1.0).unwrap();
        let op = build_precision(&prior, &empty.laplacian(), 1.0).unwrap();
        assert_eq!(log_p1(&st, &empty, &op).unwrap(), 0.0);

        let one = Network::new(3, 1, &[(0, 1)], &[], &[]).unwrap();
        let op = build_precision(&prior, &one.laplacian(), 1.0).unwrap();
        assert_abs_diff_eq!(log_p1(&st, &one, &op).unwrap(), -0.693147, epsilon = 1e-6);
    }

    #[test]
    fn log_p0_examples() {
        let k3 = Network::new(3, 1, &[(0, 1), (1, 2), (0, 2)], &[], &[]).unwrap();
        let st = GlpmState::new(array![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], vec![0.5], 1.0).unwrap();
        assert_eq!(log_p0(&st, &k3, None).unwrap(), 0.0);

        // The only non-edge is {0, 1}, at squared distance 2.
        let net = Network::new(3, 1, &[(1, 2), (0, 2)], &[], &[]).unwrap();
        // log(1 − 0.5/e) = −0.2032671.
        assert_abs_diff_eq!(log_p0(&st, &net, None).unwrap(), -0.2032671, epsilon = 1e-7);
        assert_abs_diff_eq!(
            log_p0(&st, &net, None).unwrap(),
            (1.0 - 0.5 * (-1.0f64).exp()).ln(),
            epsilon = 1e-15
        );
        let set = BrightSet::all_bright(&net);
        assert_abs_diff_eq!(log_p0(&st, &net, Some(&set)).unwrap(), -0.458675, epsilon = 1e-6);
    }

    #[test]
    fn coincident_bright_pair_is_negative_infinity() {
        let net = Network::new(2, 1, &[], &[], &[]).unwrap();
        let st = GlpmState::new(Array2::zeros((2, 2)), vec![0.5], 1.0).unwrap();
        let set = BrightSet::all_bright(&net);
        assert_eq!(log_p0(&st, &net, Some(&set)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gradient_is_antisymmetric_for_two_nodes() {
        let net = Network::new(2, 1, &[], &[], &[]).unwrap();
        let st = GlpmState::new(array![[0.3, -0.2], [-0.3, 0.2]], vec![0.4], 1.0).unwrap();
        let g = grad_log_p0(&st, &net, None).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(g[[0, k]], -g[[1, k]], epsilon = 1e-15);
        }
        let empty = Network::new(2, 1, &[(0, 1)], &[], &[]).unwrap();
        assert!(grad_log_p0(&st, &empty, None).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unobserved_dyads_do_not_change_the_posterior() {
        let prior = PriorSpec::standard(4, 1);
        let st = GlpmState::new(
            array![[0.1, 0.2], [0.7, -0.4], [-0.5, 0.9], [1.2, 0.3]],
            vec![0.3],
            0.8,
        )
        .unwrap();
        let a = Network::new(4, 1, &[(0, 1), (2, 3)], &[], &[]).unwrap();
        let b = Network::new(4, 1, &[(0, 1), (2, 3)], &[], &[(0, 3)]).unwrap();
        let lp = |net: &Network| {
            let op = build_precision(&prior, &net.laplacian(), st.gamma2).unwrap();
            log_posterior(&st, net, &prior, &op).unwrap()
        };
        let (la, lb) = (lp(&a), lp(&b));
        let s03 = sq_dist(&st.positions, 0, 3);
        assert_abs_diff_eq!(la - lb, log1mexp(0.5 * s03 - 0.3f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn uniform_tau_prior_contributes_nothing() {
        let prior = PriorSpec::standard(2, 1);
        let st = GlpmState::new(Array2::zeros((2, 2)), vec![0.37], 1.0).unwrap();
        // γ² = 1 zeroes the log γ² terms; b/γ² = 1 remains.
        assert_abs_diff_eq!(log_prior_params(&st, &prior), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn augmentation_preserves_the_marginal() {
        let net = Network::new(3, 1, &[(0, 1)], &[], &[]).unwrap();
        let st = GlpmState::new(array![[0.0, 0.5], [0.4, -0.1], [1.0, 1.0]], vec![0.45], 1.0).unwrap();
        let (m, a) = marginal_vs_augmented_check(&st, &net).unwrap();
        assert!((m - a).abs() < 1e-10);

        let k3 = Network::new(3, 1, &[(0, 1), (1, 2), (0, 2)], &[], &[]).unwrap();
        let (m, a) = marginal_vs_augmented_check(&st, &k3).unwrap();
        let edge_part: f64 = [(0, 1), (1, 2), (0, 2)]
            .iter()
            .map(|&(i, j)| 0.45f64.ln() - 0.5 * sq_dist(&st.positions, i, j))
            .sum();
        assert_abs_diff_eq!(m, edge_part, epsilon = 1e-12);
        assert_abs_diff_eq!(a, edge_part, epsilon = 1e-12);

        let big = Network::new(7, 1, &[], &[], &[]).unwrap();
        let st7 = GlpmState::new(Array2::zeros((7, 2)), vec![0.5], 1.0).unwrap();
        assert!(matches!(
            marginal_vs_augmented_check(&st7, &big),
            Err(GlpmError::TooLargeToEnumerate { .. })
        ));
    }

    #[test]
    fn small_tau_makes_all_dark_dominant() {
        // With τ → 0 every non-edge's θ = 0 term carries almost all the mass.
        let net = Network::new(3, 1, &[], &[], &[]).unwrap();
        let st = GlpmState::new(array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], vec![1e-9], 1.0).unwrap();
        let (_, a) = marginal_vs_augmented_check(&st, &net).unwrap();
        let all_dark = 3.0 * (-1e-9f64).ln_1p();
        assert!((a - all_dark).abs() < 1e-8);
    }
}
