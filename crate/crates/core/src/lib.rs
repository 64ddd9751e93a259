//! Bayesian linearized seismic imaging with a deep convolutional prior.
//!
//! The unknown reflectivity `dm` is reparameterized as the output of a
//! randomly initialized CNN `g(z, w)` with a Gaussian prior on `w`. The
//! posterior over `w` is sampled with stochastic gradient Langevin dynamics,
//! and the samples are averaged into an image with a pointwise uncertainty
//! map.
//!
//! Modules, bottom-up:
//! - [`autodiff`]: tensors and reverse-mode VJPs for the network.
//! - [`wave`]: finite-difference propagation, Born modeling and its adjoint.
//! - [`prior`]: the network, its weight prior and prior-predictive statistics.
//! - [`inference`]: objectives, gradients, MLE / MAP / SGLD.
//! - [`stats`]: model averaging, pointwise std, profiles, histograms, SNR.
//! - [`harness`]: toy models, data simulation, encoding, config and file I/O.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod inference;
pub mod prior;
pub mod rng;
pub mod stats;
pub mod wave;

pub use error::{Error, Result};
