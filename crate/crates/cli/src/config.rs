//! Flat TOML experiment configuration.
//!
//! Every key is optional; [`ExperimentConfig::resolve`] fills derived
//! defaults so the copy written next to the outputs is complete.

use std::fs;
use std::path::{Path, PathBuf};

use glpm_core::{
    CovariateRule, FactorBackend, HmcConfig, MwgConfig, Network, OmegaSpec, PriorSpec,
    SamplerConfig, SamplerKind, SynthSpec, TuneSettings,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Edge list; when absent the network is generated from the synthetic keys.
    pub edges: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub mask: Option<PathBuf>,

    pub n: usize,
    pub tau: Vec<f64>,
    pub gamma2: f64,
    /// `single`, `uniform` or `blocks`.
    pub covariate_rule: String,
    pub covariate_categories: usize,
    pub block_size: usize,
    /// Defaults to `seed`.
    pub network_seed: Option<u64>,

    pub d: usize,
    /// `identity`, `ar1` or `file`.
    pub omega: String,
    pub omega_rho: f64,
    /// 1-based node blocks for `ar1`; empty means one block over all nodes.
    pub omega_blocks: Vec<Vec<usize>>,
    pub omega_file: Option<PathBuf>,
    /// One per category; empty means 1.
    pub tau_alpha: Vec<f64>,
    pub tau_beta: Vec<f64>,
    pub gamma_a: f64,
    pub gamma_b: f64,

    pub kind: SamplerKind,
    pub kinds: Vec<SamplerKind>,
    pub iterations: usize,
    pub thin: usize,
    /// In iterations; defaults to 10% of `iterations`.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub dyad_count: usize,

    /// Tune step sizes before fitting; otherwise the explicit values below are used.
    pub tune: bool,
    pub delta: f64,
    pub epsilon: f64,
    /// Defaults to `round(2/epsilon)`.
    pub leap_count: Option<usize>,
    /// One per category; empty means 0.05.
    pub tau_widths: Vec<f64>,
    pub backend: FactorBackend,
    pub init_ascent_steps: usize,
    pub tune_burn_in: usize,
    pub tune_pilot: usize,
    pub tune_max_rounds: usize,

    /// Output directory of a previous `fit`, read by `diagnose`.
    pub fit_dir: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let tune = TuneSettings::default();
        ExperimentConfig {
            edges: None,
            covariates: None,
            mask: None,
            n: 50,
            tau: vec![0.2],
            gamma2: 0.2,
            covariate_rule: "single".into(),
            covariate_categories: 2,
            block_size: 10,
            network_seed: None,
            d: 2,
            omega: "identity".into(),
            omega_rho: 0.9,
            omega_blocks: Vec::new(),
            omega_file: None,
            tau_alpha: Vec::new(),
            tau_beta: Vec::new(),
            gamma_a: 1.0,
            gamma_b: 1.0,
            kind: SamplerKind::SplitHmc,
            kinds: SamplerKind::ALL.to_vec(),
            iterations: 1000,
            thin: 1,
            burn_in: None,
            seed: 1,
            dyad_count: 500,
            tune: true,
            delta: MwgConfig::default().delta,
            epsilon: HmcConfig::default().epsilon,
            leap_count: None,
            tau_widths: Vec::new(),
            backend: FactorBackend::Auto,
            init_ascent_steps: 200,
            tune_burn_in: tune.burn_in,
            tune_pilot: tune.pilot,
            tune_max_rounds: tune.max_rounds,
            fit_dir: None,
            out: PathBuf::from("glpm-out"),
        }
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.edges,
            &mut config.covariates,
            &mut config.mask,
            &mut config.omega_file,
            &mut config.fit_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Fills derived defaults and checks everything that can be checked
    /// without touching the network files.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.network_seed.get_or_insert(self.seed);
        self.burn_in.get_or_insert(self.iterations / 10);
        if self.leap_count.is_none() {
            let hmc = HmcConfig::with_target_length(self.epsilon).map_err(|e| invalid(e.to_string()))?;
            self.leap_count = Some(hmc.leap_count);
        }
        if self.edges.is_none() {
            self.synth_spec()?.validate().map_err(|e| invalid(e.to_string()))?;
        }
        for path in [&self.edges, &self.covariates, &self.mask, &self.omega_file].into_iter().flatten() {
            if !path.is_file() {
                return Err(invalid(format!("{} does not exist", path.display())));
            }
        }
        if self.covariates.is_some() && self.edges.is_none() {
            return Err(invalid("`covariates` needs `edges`"));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if self.d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if self.burn_in > Some(self.iterations) {
            return Err(invalid("burn_in exceeds iterations"));
        }
        if self.kinds.is_empty() {
            return Err(invalid("kinds must name at least one sampler"));
        }
        MwgConfig::new(self.delta).map_err(|e| invalid(e.to_string()))?;
        HmcConfig::new(self.epsilon, self.leap_count.unwrap_or(0)).map_err(|e| invalid(e.to_string()))?;
        if self.tau_widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("tau_widths must be positive"));
        }
        if self.tune_pilot == 0 || self.tune_max_rounds == 0 {
            return Err(invalid("tune_pilot and tune_max_rounds must be positive"));
        }
        self.omega_spec()?;
        Ok(self)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 10)
    }

    pub fn network_seed(&self) -> u64 {
        self.network_seed.unwrap_or(self.seed)
    }

    fn covariate_rule(&self) -> Result<CovariateRule, CliError> {
        match self.covariate_rule.as_str() {
            "single" => Ok(CovariateRule::Single),
            "uniform" => Ok(CovariateRule::Uniform { categories: self.covariate_categories }),
            "blocks" => Ok(CovariateRule::Blocks { block_size: self.block_size }),
            other => Err(invalid(format!("unknown covariate_rule `{other}`"))),
        }
    }

    pub fn omega_spec(&self) -> Result<OmegaSpec, CliError> {
        match self.omega.as_str() {
            "identity" => Ok(OmegaSpec::Identity),
            "ar1" => Ok(OmegaSpec::Ar1 {
                blocks: self.omega_blocks.clone(),
                rho: self.omega_rho,
            }),
            "file" => self
                .omega_file
                .clone()
                .map(OmegaSpec::Triplets)
                .ok_or_else(|| invalid("omega = \"file\" needs omega_file")),
            other => Err(invalid(format!("unknown omega `{other}`"))),
        }
    }

    pub fn synth_spec(&self) -> Result<SynthSpec, CliError> {
        Ok(SynthSpec {
            n: self.n,
            d: self.d,
            tau: self.tau.clone(),
            gamma2: self.gamma2,
            omega: self.omega_spec()?,
            covariates: self.covariate_rule()?,
            seed: self.network_seed(),
        })
    }

    /// The AR(1) block list with the "all nodes" default made explicit.
    fn omega_for(&self, n: usize) -> Result<OmegaSpec, CliError> {
        Ok(match self.omega_spec()? {
            OmegaSpec::Ar1 { blocks, rho } if blocks.is_empty() => OmegaSpec::Ar1 {
                blocks: vec![(1..=n).collect()],
                rho,
            },
            other => other,
        })
    }

    pub fn prior(&self, network: &Network) -> Result<PriorSpec, CliError> {
        let (n, c) = (network.node_count(), network.num_categories());
        let per_category = |v: &[f64], name: &str| -> Result<Vec<f64>, CliError> {
            match v.len() {
                0 => Ok(vec![1.0; c]),
                len if len == c => Ok(v.to_vec()),
                len => Err(invalid(format!("{name} has {len} entries, network has {c} categories"))),
            }
        };
        let omega = self.omega_for(n)?.build(n, None).map_err(|e| invalid(e.to_string()))?;
        PriorSpec::new(
            omega,
            per_category(&self.tau_alpha, "tau_alpha")?,
            per_category(&self.tau_beta, "tau_beta")?,
            self.gamma_a,
            self.gamma_b,
            self.d,
        )
        .map_err(|e| invalid(e.to_string()))
    }

    /// Explicit step sizes as a sampler configuration.
    pub fn sampler_config(&self, categories: usize) -> Result<SamplerConfig, CliError> {
        let mut config = SamplerConfig::new(categories);
        config.mwg = MwgConfig::new(self.delta).map_err(|e| invalid(e.to_string()))?;
        config.hmc = HmcConfig::new(self.epsilon, self.leap_count.unwrap_or(1))
            .map_err(|e| invalid(e.to_string()))?;
        match self.tau_widths.len() {
            0 => {}
            len if len == categories => config.tau_widths = self.tau_widths.clone(),
            len => {
                return Err(invalid(format!(
                    "tau_widths has {len} entries, network has {categories} categories"
                )))
            }
        }
        config.backend = self.backend;
        config.init_ascent_steps = self.init_ascent_steps;
        Ok(config)
    }

    pub fn tune_settings(&self) -> TuneSettings {
        TuneSettings {
            burn_in: self.tune_burn_in,
            pilot: self.tune_pilot,
            max_rounds: self.tune_max_rounds,
        }
    }

    /// Copies tuned step sizes back into the flat keys.
    pub fn with_tuned(&self, kind: SamplerKind, tuned: &SamplerConfig) -> Self {
        let mut out = self.clone();
        out.kind = kind;
        out.tune = false;
        out.delta = tuned.mwg.delta;
        out.epsilon = tuned.hmc.epsilon;
        out.leap_count = Some(tuned.hmc.leap_count);
        out.tau_widths = tuned.tau_widths.clone();
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_defaults() {
        let config: ExperimentConfig = toml::from_str("").unwrap();
        let resolved = config.resolve().unwrap();
        assert_eq!(resolved.burn_in, Some(100));
        assert_eq!(resolved.network_seed, Some(1));
        assert_eq!(resolved.leap_count, Some((2.0 / resolved.epsilon).round() as usize));
    }

    #[test]
    fn resolved_config_round_trips() {
        let config: ExperimentConfig =
            toml::from_str("n = 12\ntau = [0.3, 0.6]\ncovariate_rule = \"blocks\"\nblock_size = 4\nkinds = [\"mwg\"]\n")
                .unwrap();
        let resolved = config.resolve().unwrap();
        let back: ExperimentConfig = toml::from_str(&resolved.to_toml()).unwrap();
        assert_eq!(back, resolved);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("iterationz = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("kind = \"nuts\"").is_err());
        let bad_tau: ExperimentConfig = toml::from_str("tau = [1.5]").unwrap();
        assert!(matches!(bad_tau.resolve(), Err(CliError::Validation(_))));
        let missing: ExperimentConfig = toml::from_str("edges = \"/nonexistent/edges.txt\"").unwrap();
        assert!(matches!(missing.resolve(), Err(CliError::Validation(_))));
    }

    #[test]
    fn tuned_values_are_written_back() {
        let base = ExperimentConfig::default();
        let mut tuned = SamplerConfig::new(1);
        tuned.hmc = HmcConfig::new(0.25, 8).unwrap();
        tuned.tau_widths = vec![0.01];
        let out = base.with_tuned(SamplerKind::SplitHmcFlymc, &tuned);
        assert!(!out.tune);
        assert_eq!((out.epsilon, out.leap_count), (0.25, Some(8)));
        assert_eq!(out.sampler_config(1).unwrap().hmc, tuned.hmc);
    }
}
