use std::f64::consts::PI;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::prior::{network_forward, network_vjp, LatentInput, NetworkArchitecture, NetworkWeights};
use crate::wave::{ModelPerturbation, ShotRecord};

/// A sum of `n_terms` differentiable terms, sampled one at a time.
pub trait StochasticObjective {
    fn dim(&self) -> usize;
    fn n_terms(&self) -> usize;
    /// `(J^(i)(x), grad J^(i)(x))`.
    fn term(&self, x: &[f64], i: usize) -> Result<(f64, Vec<f64>)>;
}

fn squared_misfit(dataset: &Dataset, dm: &ModelPerturbation, i: usize) -> Result<(ShotRecord, f64)> {
    let predicted = dataset.modeler(i)?.forward(dm)?;
    let r = predicted.minus(dataset.residual(i)?)?;
    let s = r.norm_sq();
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("data misfit of experiment {i}")));
    }
    Ok((r, s))
}

/// `1/(2 sigma2) sum_i |dd_i - J_i dm|^2 + (N D / 2) log(2 pi sigma2)`.
pub fn neg_log_likelihood(dataset: &Dataset, dm: &ModelPerturbation) -> Result<f64> {
    let s2 = dataset.sigma2();
    let mut total = 0.0;
    for i in 0..dataset.n() {
        total += squared_misfit(dataset, dm, i)?.1;
    }
    let nd = (dataset.n() * dataset.d()) as f64;
    Ok(total / (2.0 * s2) + 0.5 * nd * (2.0 * PI * s2).ln())
}

/// The posterior over network weights for one dataset, latent input and prior scale.
pub struct DeepPriorPosterior<'a> {
    pub dataset: &'a Dataset,
    pub arch: NetworkArchitecture,
    pub z: LatentInput,
    pub lambda: f64,
}

impl<'a> DeepPriorPosterior<'a> {
    pub fn new(dataset: &'a Dataset, arch: NetworkArchitecture, z: LatentInput, lambda: f64) -> Result<Self> {
        arch.validate()?;
        let g = dataset.grid();
        if (arch.nz, arch.nx) != (g.nz, g.nx) {
            return Err(Error::InvalidArgument(format!(
                "network output {}x{} does not match the {}x{} model grid",
                arch.nz, arch.nx, g.nz, g.nx
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            dataset,
            arch,
            z,
            lambda,
        })
    }

    fn weights(&self, w: &[f64]) -> Result<NetworkWeights> {
        NetworkWeights::from_values(&self.arch, w.to_vec())
    }

    /// `g(z, w)` on the dataset grid.
    pub fn image(&self, w: &[f64]) -> Result<ModelPerturbation> {
        let out = network_forward(&self.arch, &self.z, &self.weights(w)?)?;
        ModelPerturbation::new(*self.dataset.grid(), out.into_image())
    }

    fn prior_term(&self, w: &[f64]) -> f64 {
        0.5 * self.lambda * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }
}

/// `1/(2 sigma2) sum_i |dd_i - J_i g(z, w)|^2 + lambda^2/2 |w|^2`; the
/// constant `(N D / 2) log(2 pi sigma2)` is omitted.
pub fn neg_log_posterior(post: &DeepPriorPosterior, w: &[f64]) -> Result<f64> {
    let dm = post.image(w)?;
    let mut total = 0.0;
    for i in 0..post.dataset.n() {
        total += squared_misfit(post.dataset, &dm, i)?.1;
    }
    Ok(total / (2.0 * post.dataset.sigma2()) + post.prior_term(w))
}

/// [`neg_log_posterior`] and its full gradient, with the data cotangents
/// summed before a single network VJP.
pub fn neg_log_posterior_grad(post: &DeepPriorPosterior, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let weights = post.weights(w)?;
    let pass = network_forward(&post.arch, &post.z, &weights)?;
    let dm = ModelPerturbation::new(*post.dataset.grid(), pass.image().to_vec())?;
    let s2 = post.dataset.sigma2();
    let mut total = 0.0;
    let mut cot = vec![0.0; dm.values().len()];
    for i in 0..post.dataset.n() {
        let (r, s) = squared_misfit(post.dataset, &dm, i)?;
        total += s;
        let back = post.dataset.modeler(i)?.adjoint(&r)?;
        for (c, b) in cot.iter_mut().zip(back.values()) {
            *c += b / s2;
        }
    }
    let mut grad = network_vjp(&pass, &cot)?;
    let l2 = post.lambda * post.lambda;
    for (g, v) in grad.iter_mut().zip(w) {
        *g += l2 * v;
    }
    Ok((total / (2.0 * s2) + post.prior_term(w), grad))
}

/// `(grad_w J^(i), J^(i))` with
/// `grad_w J^(i) = vjp(N/sigma2 J_i^T (J_i g - dd_i)) + lambda^2 w`.
pub fn stochastic_grad(post: &DeepPriorPosterior, w: &[f64], i: usize) -> Result<(Vec<f64>, f64)> {
    let weights = post.weights(w)?;
    let pass = network_forward(&post.arch, &post.z, &weights)?;
    let dm = ModelPerturbation::new(*post.dataset.grid(), pass.image().to_vec())?;
    let (r, s) = squared_misfit(post.dataset, &dm, i)?;
    let scale = post.dataset.n() as f64 / post.dataset.sigma2();
    let back = post.dataset.modeler(i)?.adjoint(&r)?;
    let cot: Vec<f64> = back.values().iter().map(|b| scale * b).collect();
    let mut grad = network_vjp(&pass, &cot)?;
    let l2 = post.lambda * post.lambda;
    for (g, v) in grad.iter_mut().zip(w) {
        *g += l2 * v;
    }
    Ok((grad, 0.5 * scale * s + post.prior_term(w)))
}

impl StochasticObjective for DeepPriorPosterior<'_> {
    fn dim(&self) -> usize {
        self.arch.n_params()
    }

    fn n_terms(&self) -> usize {
        self.dataset.n()
    }

    fn term(&self, x: &[f64], i: usize) -> Result<(f64, Vec<f64>)> {
        stochastic_grad(self, x, i).map(|(g, v)| (v, g))
    }
}

/// `J^(i)(dm) = N/(2 sigma2) |dd_i - J_i dm|^2`, the per-experiment terms of
/// the negative log-likelihood (constant omitted).
pub struct LikelihoodObjective<'a> {
    pub dataset: &'a Dataset,
}

impl StochasticObjective for LikelihoodObjective<'_> {
    fn dim(&self) -> usize {
        self.dataset.grid().cells()
    }

    fn n_terms(&self) -> usize {
        self.dataset.n()
    }

    fn term(&self, x: &[f64], i: usize) -> Result<(f64, Vec<f64>)> {
        let dm = ModelPerturbation::new(*self.dataset.grid(), x.to_vec())?;
        let (r, s) = squared_misfit(self.dataset, &dm, i)?;
        let scale = self.dataset.n() as f64 / self.dataset.sigma2();
        let back = self.dataset.modeler(i)?.adjoint(&r)?;
        Ok((0.5 * scale * s, back.values().iter().map(|b| scale * b).collect()))
    }
}
