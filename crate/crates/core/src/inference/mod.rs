//! Posterior inference for the linear-Gaussian latent feature model.

pub mod geweke;
pub mod likelihood;
pub mod sampler;
pub mod slice;

pub use likelihood::{dense_plus_singletons, log_likelihood, synthesize_data, Scales, SyntheticData};
pub use sampler::{initial_state, run_chain, ChainOutput, LatentFactorState, Priors, SampleRecord, Sampler, SamplerConfig, Updates};
