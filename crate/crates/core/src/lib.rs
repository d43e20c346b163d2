//! Exact MCMC for Gaussian latent position network models.
//!
//! Three samplers share one model: Metropolis-within-Gibbs, split HMC with an
//! exactly integrated Gaussian part, and split HMC with Firefly subsampling of
//! the non-edges. See [`samplers::run_sampler`].

pub mod diagnostics;
pub mod error;
pub mod model;
pub mod network;
pub mod precision;
pub mod samplers;
pub mod sparse;
pub mod synth;
pub mod tuning;

pub use diagnostics::{
    effective_sample_size, relative_efficiency, sample_dyads, ChainOutput, EssEstimate,
};
pub use error::{GlpmError, Result};
pub use model::GlpmState;
pub use network::{load_network, load_network_files, Dyad, Network};
pub use precision::{build_precision, FactorBackend, OmegaSpec, PrecisionOperator, PriorSpec};
pub use samplers::{
    run_sampler, BrightSet, HmcConfig, MomentumBlock, MwgConfig, SamplerConfig, SamplerKind,
};
pub use synth::{expected_edge_prob, generate_network, CovariateRule, SynthSpec};
pub use tuning::{tune_sampler, tune_step_size, TuneKernel, TuneResult, TuneSettings};
