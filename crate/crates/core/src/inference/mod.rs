//! Objectives, exact gradients and the three estimators.
//!
//! Experiments are indexed from 0. With `N` experiments, `D` samples per
//! record and noise variance `sigma2`:
//!
//! ```text
//! -log p(dd | dm)  = 1/(2 sigma2) sum_i |dd_i - J_i dm|^2 + (N D / 2) log(2 pi sigma2)
//! -log p(w | dd)   = 1/(2 sigma2) sum_i |dd_i - J_i g(z, w)|^2 + lambda^2 / 2 |w|^2   (+ const)
//! J^(i)(w)         = N/(2 sigma2) |dd_i - J_i g(z, w)|^2 + lambda^2 / 2 |w|^2
//! ```

mod dataset;
mod estimators;
mod objective;
mod sgld;

pub use dataset::{data_residual, Dataset, Experiment};
pub use estimators::{lipschitz_estimate, run_map, run_mle, MapConfig, MapResult, MleConfig, MleResult};
pub use objective::{
    neg_log_likelihood, neg_log_posterior, neg_log_posterior_grad, stochastic_grad, DeepPriorPosterior,
    LikelihoodObjective, StochasticObjective,
};
pub use sgld::{
    dry_run, run_chain, run_sgld, run_sgld_with, sgld_step, write_diagnostics_csv, ChainState, Diagnostic, SgldConfig,
    SgldRun, StepHooks,
};
