use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::objective::{DeepPriorPosterior, StochasticObjective};
use crate::error::{Error, Result};
use crate::prior::sample_prior_weights_from;
use crate::rng::{self, Rng};
use crate::stats::{ChainMetadata, PosteriorEnsemble};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin_every: usize,
    pub seed: u64,
    /// When set, `eps_k = eps (1 + k / k0)^-0.55`.
    #[serde(default)]
    pub decay_k0: Option<f64>,
}

impl SgldConfig {
    /// `eps = 0.002`, `lambda = 170`, 10000 iterations, 3000 burn-in, every 50th kept.
    pub fn paper_schedule(seed: u64) -> Self {
        Self {
            epsilon: 0.002,
            lambda: 170.0,
            total_iterations: 10_000,
            burn_in: 3_000,
            thin_every: 50,
            seed,
            decay_k0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("sgld: {m}")));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.burn_in > 0 && self.burn_in < self.total_iterations) {
            return bad(format!(
                "burn_in must satisfy 0 < burn_in < total_iterations, got {} and {}",
                self.burn_in, self.total_iterations
            ));
        }
        if self.thin_every == 0 {
            return bad("thin_every must be at least 1".into());
        }
        if let Some(k0) = self.decay_k0 {
            if !(k0 > 0.0) {
                return bad(format!("decay_k0 must be positive, got {k0}"));
            }
        }
        Ok(())
    }

    /// Step size at iteration `k` (1-based).
    pub fn step_size(&self, k: usize) -> f64 {
        match self.decay_k0 {
            None => self.epsilon,
            Some(k0) => self.epsilon * (1.0 + k as f64 / k0).powf(-0.55),
        }
    }

    /// Whether `w_k` (after the `k`-th update) joins the ensemble.
    pub fn is_retained(&self, k: usize) -> bool {
        k > self.burn_in && (k - self.burn_in) % self.thin_every == 0
    }

    /// `floor((total - burn_in) / thin_every)`.
    pub fn ensemble_size(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thin_every
    }
}

/// Counts the retained iterations of a schedule without stepping.
pub fn dry_run(config: &SgldConfig) -> Result<Vec<usize>> {
    config.validate()?;
    Ok((1..=config.total_iterations)
        .filter(|&k| config.is_retained(k))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub iteration: usize,
    /// Experiment index drawn for this update.
    pub term: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub wall_seconds: f64,
}

/// Test hooks for [`sgld_step`].
#[derive(Clone, Copy, Debug, Default)]
pub struct StepHooks {
    pub zero_gradient: bool,
    pub zero_noise: bool,
}

/// Chain position `w_k` with the streams that produce its future.
pub struct ChainState {
    pub iteration: usize,
    pub w: Vec<f64>,
    minibatch: Rng,
    noise: Rng,
    pub diagnostics: Vec<Diagnostic>,
    started: Instant,
}

impl ChainState {
    pub fn new(w0: Vec<f64>, seed: u64) -> Self {
        Self {
            iteration: 0,
            w: w0,
            minibatch: rng::seeded(seed, rng::stream::MINIBATCH),
            noise: rng::seeded(seed, rng::stream::CHAIN),
            diagnostics: Vec::new(),
            started: Instant::now(),
        }
    }
}

/// One update `w <- w - (eps/2) grad J^(i)(w) + N(0, eps I)`, `i` uniform.
pub fn sgld_step<O: StochasticObjective + ?Sized>(
    state: &mut ChainState,
    objective: &O,
    config: &SgldConfig,
    hooks: StepHooks,
) -> Result<()> {
    let k = state.iteration + 1;
    let i = state.minibatch.random_range(0..objective.n_terms());
    let abort = |reason: String| Error::ChainAbort { iteration: k, reason };
    let (value, grad) = objective.term(&state.w, i).map_err(|e| abort(e.to_string()))?;
    if grad.len() != state.w.len() {
        return Err(Error::shape("sgld_step", "gradient length", state.w.len(), grad.len()));
    }
    let eps = config.step_size(k);
    let half = if hooks.zero_gradient { 0.0 } else { 0.5 * eps };
    let sd = if hooks.zero_noise { 0.0 } else { eps.sqrt() };
    for (w, g) in state.w.iter_mut().zip(&grad) {
        let eta = rng::standard_normal(&mut state.noise);
        *w += -half * g + sd * eta;
    }
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !value.is_finite() || !grad_norm.is_finite() || state.w.iter().any(|v| !v.is_finite()) {
        return Err(abort(format!(
            "non-finite update (objective {value:.4e}, gradient norm {grad_norm:.4e})"
        )));
    }
    state.iteration = k;
    state.diagnostics.push(Diagnostic {
        iteration: k,
        term: i,
        value,
        grad_norm,
        wall_seconds: state.started.elapsed().as_secs_f64(),
    });
    Ok(())
}

/// Runs `config.total_iterations` updates from `w0`, calling `keep(k, w_k)`
/// for every retained iterate.
pub fn run_chain<O, F>(objective: &O, config: &SgldConfig, w0: Vec<f64>, mut keep: F) -> Result<ChainState>
where
    O: StochasticObjective + ?Sized,
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    config.validate()?;
    if w0.len() != objective.dim() {
        return Err(Error::shape(
            "run_chain",
            "initial state length",
            objective.dim(),
            w0.len(),
        ));
    }
    let mut state = ChainState::new(w0, config.seed);
    for _ in 0..config.total_iterations {
        sgld_step(&mut state, objective, config, StepHooks::default())?;
        if config.is_retained(state.iteration) {
            keep(state.iteration, &state.w)?;
        }
    }
    Ok(state)
}

pub struct SgldRun {
    pub ensemble: PosteriorEnsemble,
    pub diagnostics: Vec<Diagnostic>,
    pub final_weights: Vec<f64>,
}

/// Samples the deep-prior posterior. The chain starts from a prior draw on
/// the chain-initialization stream of `config.seed`.
pub fn run_sgld(post: &DeepPriorPosterior, config: &SgldConfig, config_hash: &str) -> Result<SgldRun> {
    run_sgld_with(post, post, config, config_hash)
}

/// As [`run_sgld`], stepping on `objective` (any unbiased estimate of the
/// same posterior) and imaging retained weights through `post`.
pub fn run_sgld_with<O>(
    post: &DeepPriorPosterior,
    objective: &O,
    config: &SgldConfig,
    config_hash: &str,
) -> Result<SgldRun>
where
    O: StochasticObjective + ?Sized,
{
    config.validate()?;
    let mut init = rng::seeded(config.seed, rng::stream::CHAIN_INIT);
    let w0 = sample_prior_weights_from(&post.arch, config.lambda, &mut init)?.into_values();
    let meta = ChainMetadata {
        seed: config.seed,
        config_hash: config_hash.to_string(),
        total_iterations: config.total_iterations,
        burn_in: config.burn_in,
        thin_every: config.thin_every,
    };
    let mut ensemble = PosteriorEnsemble::new(*post.dataset.grid(), meta);
    let state = run_chain(objective, config, w0, |k, w| {
        ensemble.push(k, post.image(w)?.into_values())
    })?;
    Ok(SgldRun {
        ensemble,
        diagnostics: state.diagnostics,
        final_weights: state.w,
    })
}

/// CSV with columns `iteration,term,value,grad_norm,wall_seconds`.
pub fn write_diagnostics_csv(path: &Path, rows: &[Diagnostic]) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "iteration,term,value,grad_norm,wall_seconds").map_err(io)?;
    for d in rows {
        writeln!(
            f,
            "{},{},{:e},{:e},{:.6}",
            d.iteration, d.term, d.value, d.grad_norm, d.wall_seconds
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
