//! Synthetic networks drawn from the model at the original scale.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::network::Network;
use crate::precision::{sample_prior_positions, OmegaSpec, PriorSpec};

/// How dyads are assigned covariate categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovariateRule {
    /// Every dyad in category 1.
    #[default]
    Single,
    /// Each dyad independently uniform over `1..=categories`.
    Uniform { categories: usize },
    /// Consecutive node blocks of `block_size`: within-block dyads are
    /// category 1, between-block dyads category 2.
    Blocks { block_size: usize },
}

impl CovariateRule {
    pub fn num_categories(&self) -> usize {
        match self {
            CovariateRule::Single => 1,
            CovariateRule::Uniform { categories } => *categories,
            CovariateRule::Blocks { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub tau: Vec<f64>,
    pub gamma2: f64,
    #[serde(default)]
    pub omega: OmegaSpec,
    #[serde(default)]
    pub covariates: CovariateRule,
    pub seed: u64,
}

impl SynthSpec {
    /// One category, `Ω = I`, `d = 2`.
    pub fn isotropic(n: usize, tau: f64, gamma2: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            d: 2,
            tau: vec![tau],
            gamma2,
            omega: OmegaSpec::Identity,
            covariates: CovariateRule::Single,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d == 0 {
            return Err(GlpmError::InvalidParameter(format!(
                "synthetic network needs n ≥ 2 and d ≥ 1 (got n = {}, d = {})",
                self.n, self.d
            )));
        }
        let c = self.covariates.num_categories();
        if c == 0 || c > u16::MAX as usize {
            return Err(GlpmError::InvalidParameter(format!("{c} categories")));
        }
        if let CovariateRule::Blocks { block_size: 0 } = self.covariates {
            return Err(GlpmError::InvalidParameter("block size must be positive".into()));
        }
        if self.tau.len() != c {
            return Err(GlpmError::dims(format!("{c} τ values"), self.tau.len()));
        }
        if self.tau.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(GlpmError::InvalidParameter(format!(
                "τ = {:?} must lie in [0, 1]",
                self.tau
            )));
        }
        if !(self.gamma2 > 0.0 && self.gamma2.is_finite()) {
            return Err(GlpmError::InvalidParameter(format!(
                "γ² = {} must be positive",
                self.gamma2
            )));
        }
        Ok(())
    }
}

/// `E(A_ij) = τ_c (1 + 2/γ²)^{−d/2}` for `z_i, z_j ~ N(0, I)` independent.
pub fn expected_edge_prob(tau_c: f64, gamma2: f64, d: usize) -> f64 {
    tau_c * (1.0 + 2.0 / gamma2).powf(-0.5 * d as f64)
}

/// Draws positions `Z ~ N(0, Ω⁻¹)` per column and edges with probability
/// `τ_c exp(−‖z_i − z_j‖²/(2γ²))`. Returns the network and the true positions.
pub fn generate_network(spec: &SynthSpec, base_dir: Option<&Path>) -> Result<(Network, Array2<f64>)> {
    spec.validate()?;
    let c = spec.covariates.num_categories();
    let omega = spec.omega.build(spec.n, base_dir)?;
    let prior = PriorSpec::new(omega, vec![1.0; c], vec![1.0; c], 1.0, 1.0, spec.d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = sample_prior_positions(&prior, 1.0, &mut rng);

    let mut covariates = Vec::new();
    let mut edges = Vec::new();
    for j in 1..spec.n {
        for i in 0..j {
            let cat = match spec.covariates {
                CovariateRule::Single => 0,
                CovariateRule::Uniform { categories } => rng.random_range(0..categories),
                CovariateRule::Blocks { block_size } => usize::from(i / block_size != j / block_size),
            };
            if cat != 0 {
                covariates.push((i, j, cat));
            }
            let s: f64 = (0..spec.d).map(|k| (z[[i, k]] - z[[j, k]]).powi(2)).sum();
            let p = spec.tau[cat] * (-s / (2.0 * spec.gamma2)).exp();
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let network = Network::new(spec.n, c, &edges, &covariates, &[])?;
    Ok((network, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_examples() {
        assert_abs_diff_eq!(expected_edge_prob(0.2, 0.2, 2), 0.2 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_edge_prob(1.0, 2.0, 1), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(expected_edge_prob(0.7, 1e12, 2), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn one_dimensional_closed_form_matches_quadrature() {
        // E over z_i − z_j ~ N(0, 2) of exp(−x²/(2γ²)), by the midpoint rule.
        let (tau, gamma2): (f64, f64) = (0.6, 0.8);
        let h = 1e-3;
        let mut total = 0.0;
        let mut x: f64 = -20.0 + 0.5 * h;
        while x < 20.0 {
            let density = (-x * x / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
            total += density * (-x * x / (2.0 * gamma2)).exp() * h;
            x += h;
        }
        assert_abs_diff_eq!(tau * total, expected_edge_prob(tau, gamma2, 1), epsilon = 1e-10);
    }

    #[test]
    fn zero_tau_gives_empty_graph() {
        let (net, z) = generate_network(&SynthSpec::isotropic(30, 0.0, 1.0, 4), None).unwrap();
        assert_eq!(net.edge_count(), 0);
        assert_eq!(z.dim(), (30, 2));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = SynthSpec {
            covariates: CovariateRule::Uniform { categories: 3 },
            tau: vec![0.9, 0.5, 0.1],
            ..SynthSpec::isotropic(25, 0.5, 1.0, 12)
        };
        let (a, za) = generate_network(&spec, None).unwrap();
        let (b, zb) = generate_network(&spec, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(za, zb);
        assert_eq!(a.num_categories(), 3);
    }

    #[test]
    fn invalid_tau_is_rejected() {
        let spec = SynthSpec::isotropic(10, 1.2, 1.0, 0);
        assert!(generate_network(&spec, None).is_err());
    }
}
