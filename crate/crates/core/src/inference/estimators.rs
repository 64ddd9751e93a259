use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::objective::{DeepPriorPosterior, LikelihoodObjective, StochasticObjective};
use super::sgld::Diagnostic;
use crate::error::{Error, Result};
use crate::prior::sample_prior_weights_from;
use crate::rng;
use crate::wave::ModelPerturbation;

/// Flags a run whose windowed mean objective exceeds 10x its running minimum.
struct DivergenceMonitor {
    window: VecDeque<f64>,
    size: usize,
    sum: f64,
    minimum: f64,
}

impl DivergenceMonitor {
    fn new(size: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(size),
            size: size.max(1),
            sum: 0.0,
            minimum: f64::INFINITY,
        }
    }

    /// Pushes a value; returns the windowed mean once the window is full.
    fn push(&mut self, v: f64) -> Option<f64> {
        self.window.push_back(v);
        self.sum += v;
        if self.window.len() > self.size {
            self.sum -= self.window.pop_front().unwrap_or(0.0);
        }
        (self.window.len() == self.size).then(|| self.sum / self.size as f64)
    }

    fn check(&mut self, iteration: usize, v: f64) -> Result<Option<f64>> {
        if !v.is_finite() {
            return Err(Error::Diverged {
                iteration,
                value: v,
                minimum: self.minimum,
            });
        }
        let Some(mean) = self.push(v) else { return Ok(None) };
        if mean > 10.0 * self.minimum {
            return Err(Error::Diverged {
                iteration,
                value: mean,
                minimum: self.minimum,
            });
        }
        self.minimum = self.minimum.min(mean);
        Ok(Some(mean))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub step: f64,
    pub iterations: usize,
    pub seed: u64,
}

pub struct MapResult {
    pub image: ModelPerturbation,
    pub weights: Vec<f64>,
    pub trace: Vec<Diagnostic>,
}

/// Stochastic gradient descent on `J^(i)(w)` with a fixed step, from a prior
/// draw on the chain-initialization stream of `config.seed`.
pub fn run_map(post: &DeepPriorPosterior, config: &MapConfig) -> Result<MapResult> {
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::Config(format!(
            "map: step must be positive, got {}",
            config.step
        )));
    }
    let mut init = rng::seeded(config.seed, rng::stream::CHAIN_INIT);
    let mut w = sample_prior_weights_from(&post.arch, post.lambda, &mut init)?.into_values();
    let mut pick = rng::seeded(config.seed, rng::stream::MINIBATCH);
    let mut monitor = DivergenceMonitor::new(post.n_terms());
    let mut trace = Vec::with_capacity(config.iterations);
    let started = Instant::now();
    for k in 1..=config.iterations {
        let i = pick.random_range(0..post.n_terms());
        let (value, grad) = post.term(&w, i)?;
        monitor.check(k, value)?;
        for (x, g) in w.iter_mut().zip(&grad) {
            *x -= config.step * g;
        }
        trace.push(Diagnostic {
            iteration: k,
            term: i,
            value,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(MapResult {
        image: post.image(&w)?,
        weights: w,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleConfig {
    /// Fixed step; estimated as `1 / max_i L_i` when absent.
    #[serde(default)]
    pub step: Option<f64>,
    pub max_iterations: usize,
    pub seed: u64,
    /// Stop once the running mean of `|dd_i - J_i dm|^2` over the last `N`
    /// draws falls to `sigma2 * D`.
    #[serde(default = "default_true")]
    pub early_stopping: bool,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
}

fn default_true() -> bool {
    true
}

fn default_power_iterations() -> usize {
    12
}

impl MleConfig {
    pub fn new(max_iterations: usize, seed: u64) -> Self {
        Self {
            step: None,
            max_iterations,
            seed,
            early_stopping: true,
            power_iterations: default_power_iterations(),
        }
    }
}

pub struct MleResult {
    pub image: ModelPerturbation,
    pub iterations: usize,
    pub stopped_early: bool,
    pub step: f64,
    pub trace: Vec<Diagnostic>,
}

/// Largest eigenvalue of `N/sigma2 J_i^T J_i` by power iteration.
pub fn lipschitz_estimate(dataset: &Dataset, i: usize, iterations: usize, seed: u64) -> Result<f64> {
    let grid = *dataset.grid();
    let modeler = dataset.modeler(i)?;
    let mut r = rng::split(seed, rng::stream::DOT_TEST, i as u64);
    let mut v = rng::standard_normal_vec(&mut r, grid.cells());
    let scale = dataset.n() as f64 / dataset.sigma2();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= n);
        let jv = modeler.forward(&ModelPerturbation::new(grid, v.clone())?)?;
        estimate = scale * jv.norm_sq();
        v = modeler.adjoint(&jv)?.into_values();
    }
    Ok(estimate)
}

/// Stochastic gradient descent on `dm` from zero, with discrepancy-principle
/// early stopping.
pub fn run_mle(dataset: &Dataset, config: &MleConfig) -> Result<MleResult> {
    let step = match config.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Config(format!("mle: step must be positive, got {s}"))),
        None => {
            let mut l: f64 = 0.0;
            for i in 0..dataset.n() {
                l = l.max(lipschitz_estimate(dataset, i, config.power_iterations, config.seed)?);
            }
            if l == 0.0 {
                1.0
            } else {
                1.0 / l
            }
        }
    };
    let objective = LikelihoodObjective { dataset };
    let n = dataset.n();
    let target = dataset.sigma2() * dataset.d() as f64;
    let to_misfit = 2.0 * dataset.sigma2() / n as f64;
    let mut dm = vec![0.0; dataset.grid().cells()];
    let mut pick = rng::seeded(config.seed, rng::stream::MINIBATCH);
    let mut monitor = DivergenceMonitor::new(n);
    let mut trace = Vec::new();
    let started = Instant::now();
    let mut stopped_early = false;
    let mut iterations = 0;
    for k in 1..=config.max_iterations {
        let i = pick.random_range(0..n);
        let (value, grad) = objective.term(&dm, i)?;
        // Monitor on the raw misfit so the stopping rule and the divergence
        // check share one running mean.
        let misfit = value * to_misfit;
        let mean = monitor.check(k, misfit)?;
        trace.push(Diagnostic {
            iteration: k,
            term: i,
            value,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        if config.early_stopping && mean.is_some_and(|m| m <= target) {
            stopped_early = true;
            log::info!(
                "mle: discrepancy reached at iteration {k} (mean misfit {:.4e} <= {target:.4e})",
                mean.unwrap_or(0.0)
            );
            break;
        }
        for (x, g) in dm.iter_mut().zip(&grad) {
            *x -= step * g;
        }
        iterations = k;
    }
    Ok(MleResult {
        image: ModelPerturbation::new(*dataset.grid(), dm)?,
        iterations,
        stopped_early,
        step,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monitor_flags_growth() {
        let mut m = DivergenceMonitor::new(2);
        assert_eq!(m.check(1, 4.0).unwrap(), None);
        assert_eq!(m.check(2, 2.0).unwrap(), Some(3.0));
        assert_eq!(m.check(3, 1.0).unwrap(), Some(1.5));
        assert!(m.check(4, 40.0).is_err());
        let mut m = DivergenceMonitor::new(1);
        assert!(matches!(m.check(1, f64::NAN), Err(Error::Diverged { .. })));
    }
}
