//! The deep prior: a randomly initialized encoder-decoder CNN `g(z, w)` with
//! an i.i.d. Gaussian prior `w ~ N(0, I / lambda^2)` on every kernel and bias
//! entry.

mod architecture;
mod network;
mod statistics;

pub use architecture::{Activation, NetworkArchitecture, ParamBlock};
pub use network::{
    init_latent, network_forward, network_vjp, sample_prior_weights, sample_prior_weights_from, LatentInput,
    NetworkOutput, NetworkWeights,
};
pub use statistics::{accumulate_prior_samples, prior_statistics, prior_statistics_with_probes, PriorStatistics};
