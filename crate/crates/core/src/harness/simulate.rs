use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::toy::ToyModel;
use crate::error::{Error, Result};
use crate::inference::{Dataset, DeepPriorPosterior, Experiment, StochasticObjective};
use crate::prior::{network_forward, network_vjp, NetworkWeights};
use crate::rng;
use crate::stats::snr;
use crate::wave::{
    ricker_wavelet, solve_forward_record, AcquisitionGeometry, BornModeler, Grid, ModelPerturbation, ShotRecord,
    SourceSignature,
};

/// Evenly spaced sources and receivers on horizontal lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub n_sources: usize,
    pub n_receivers: usize,
    pub source_depth_m: f64,
    pub receiver_depth_m: f64,
    /// Ricker peak frequency (Hz) and delay (s).
    pub f0: f64,
    pub t0: f64,
}

impl AcquisitionSpec {
    /// Receiver locations and unit-amplitude sources spanning the grid width.
    pub fn build(&self, grid: &Grid) -> Result<(Vec<(f64, f64)>, Vec<SourceSignature>)> {
        if self.n_sources == 0 || self.n_receivers == 0 {
            return Err(Error::Config(
                "acquisition: need at least one source and one receiver".into(),
            ));
        }
        let width = grid.width_m();
        let receivers = AcquisitionGeometry::line(self.n_receivers, 0.0, width, self.receiver_depth_m);
        let wavelet = ricker_wavelet(self.f0, grid, self.t0)?;
        let margin = width / (2.0 * self.n_sources as f64);
        let sources = AcquisitionGeometry::line(self.n_sources, margin, width - margin, self.source_depth_m)
            .into_iter()
            .map(|loc| SourceSignature::new(wavelet.clone(), loc))
            .collect();
        AcquisitionGeometry::new(receivers.clone(), Vec::new()).validate(grid)?;
        Ok((receivers, sources))
    }
}

/// Sequential shot data with its noise-free parts kept for diagnostics.
pub struct SimulatedData {
    pub dataset: Dataset,
    pub sources: Vec<SourceSignature>,
    /// `P A(m0)^-1 q_i`.
    pub background: Vec<ShotRecord>,
    /// `J(m0, q_i) dm_true`.
    pub born: Vec<ShotRecord>,
    /// Noise-free observed data (nonlinear on `m_true`, or background + Born).
    pub clean: Vec<ShotRecord>,
    pub noise: Vec<ShotRecord>,
    pub noise_variance: f64,
}

impl SimulatedData {
    /// Everything in the observed data that is not linear Born signal.
    pub fn total_noise(&self) -> Result<Vec<ShotRecord>> {
        self.clean
            .iter()
            .zip(&self.background)
            .zip(&self.born)
            .zip(&self.noise)
            .map(|(((c, b), j), n)| {
                let mut e = c.minus(b)?.minus(j)?;
                e.axpy(1.0, n);
                Ok(e)
            })
            .collect()
    }

    /// SNR (dB) of the Born signal against linearization error plus noise.
    pub fn snr_db(&self) -> Result<f64> {
        snr(&self.born, &self.total_noise()?)
    }
}

/// Noise-free records for every source: background, Born and clean data.
fn noise_free(
    toy: &ToyModel,
    receivers: &[(f64, f64)],
    sources: &[SourceSignature],
    linear: bool,
) -> Result<Vec<[ShotRecord; 3]>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let srcs = std::slice::from_ref(s);
            let geom = AcquisitionGeometry::new(receivers.to_vec(), srcs.to_vec());
            let modeler = BornModeler::new(&toy.m0, srcs, &geom)?;
            let mut background = modeler.background().clone();
            background.id = i;
            let mut born = modeler.forward(&toy.dm)?;
            born.id = i;
            let clean = if linear {
                let mut c = background.clone();
                c.axpy(1.0, &born);
                c
            } else {
                let mut c = solve_forward_record(&toy.m_true, srcs, &geom)?;
                c.id = i;
                c
            };
            Ok([background, born, clean])
        })
        .collect()
}

/// Simulates one record per source and adds i.i.d. `N(0, noise_variance)`
/// noise. `linear` replaces the nonlinear solve on `m_true` with background
/// plus Born data. The dataset's `sigma2` starts at `noise_variance` (or 1
/// when that is zero) and is normally reset by [`estimate_sigma2`].
pub fn simulate_data(
    toy: &ToyModel,
    receivers: &[(f64, f64)],
    sources: &[SourceSignature],
    noise_variance: f64,
    seed: u64,
    linear: bool,
) -> Result<SimulatedData> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be >= 0, got {noise_variance}"
        )));
    }
    let grid = *toy.m0.grid();
    let parts = noise_free(toy, receivers, sources, linear)?;
    let sd = noise_variance.sqrt();
    let mut background = Vec::new();
    let mut born = Vec::new();
    let mut clean = Vec::new();
    let mut noise = Vec::new();
    let mut experiments = Vec::new();
    for (i, [b, j, c]) in parts.into_iter().enumerate() {
        let mut r = rng::split(seed, rng::stream::NOISE, i as u64);
        let n: Vec<f64> = rng::standard_normal_vec(&mut r, grid.nt * receivers.len())
            .into_iter()
            .map(|v| sd * v)
            .collect();
        let n = ShotRecord::new(grid.nt, receivers.len(), n, i)?;
        let mut observed = c.clone();
        if noise_variance > 0.0 {
            observed.axpy(1.0, &n);
        }
        experiments.push(Experiment {
            observed,
            sources: vec![sources[i].clone()],
        });
        background.push(b);
        born.push(j);
        clean.push(c);
        noise.push(n);
    }
    let sigma2 = if noise_variance > 0.0 { noise_variance } else { 1.0 };
    let dataset = Dataset::new(toy.m0.clone(), receivers.to_vec(), experiments, sigma2)?;
    Ok(SimulatedData {
        dataset,
        sources: sources.to_vec(),
        background,
        born,
        clean,
        noise,
        noise_variance,
    })
}

/// Source amplitude `a` at which data with measurement variance
/// `noise_variance` reach `target_db` in expectation:
/// `a^2 |s|^2 = 10^(target/10) (a^2 |e|^2 + N D v)` with `s` the unit-amplitude
/// Born signal and `e` its linearization error.
pub fn calibrate_amplitude(
    toy: &ToyModel,
    receivers: &[(f64, f64)],
    sources: &[SourceSignature],
    noise_variance: f64,
    target_db: f64,
    linear: bool,
) -> Result<f64> {
    let parts = noise_free(toy, receivers, sources, linear)?;
    let mut s2 = 0.0;
    let mut e2 = 0.0;
    let mut samples = 0usize;
    for [b, j, c] in &parts {
        s2 += j.norm_sq();
        e2 += c.minus(b)?.minus(j)?.norm_sq();
        samples += j.len();
    }
    let ratio = 10f64.powf(target_db / 10.0);
    let denom = s2 - ratio * e2;
    if !(denom > 0.0) || s2 == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target SNR {target_db} dB is above what the linearization error alone allows"
        )));
    }
    Ok((ratio * samples as f64 * noise_variance / denom).sqrt())
}

/// Noise variance of one encoded record relative to a sequential one,
/// `E[sum_i e_ij^2] = n_sources`.
pub fn encoded_noise_factor(n_sources: usize) -> f64 {
    n_sources as f64
}

/// Mixes the sequential shots into `n_encodings` supershots with weights
/// `e_ij ~ N(0, 1)`. `identity` forces `e = I` (requires as many encodings as
/// shots). The encoded dataset's `sigma2` is the sequential one times
/// [`encoded_noise_factor`].
pub fn encode_simultaneous(
    sequential: &Dataset,
    n_encodings: usize,
    seed: u64,
    identity: bool,
) -> Result<(Dataset, Vec<Vec<f64>>)> {
    if n_encodings == 0 {
        return Err(Error::InvalidArgument("need at least one encoding".into()));
    }
    let ns = sequential.n();
    let weights: Vec<Vec<f64>> = if identity {
        if n_encodings != ns {
            return Err(Error::InvalidArgument(format!(
                "identity encoding needs {ns} encodings, got {n_encodings}"
            )));
        }
        (0..ns)
            .map(|j| (0..ns).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    } else {
        let mut r = rng::seeded(seed, rng::stream::ENCODING);
        (0..n_encodings).map(|_| rng::standard_normal_vec(&mut r, ns)).collect()
    };
    let experiments = encode_experiments(sequential, &weights)?;
    let factor = if identity { 1.0 } else { encoded_noise_factor(ns) };
    let ds = Dataset::new(
        sequential.m0().clone(),
        sequential.receivers().to_vec(),
        experiments,
        sequential.sigma2() * factor,
    )?;
    Ok((ds, weights))
}

fn encode_experiments(sequential: &Dataset, weights: &[Vec<f64>]) -> Result<Vec<Experiment>> {
    let grid = *sequential.grid();
    let nr = sequential.receivers().len();
    weights
        .iter()
        .enumerate()
        .map(|(j, e)| {
            if e.len() != sequential.n() {
                return Err(Error::shape(
                    "encode_simultaneous",
                    "encoding length",
                    sequential.n(),
                    e.len(),
                ));
            }
            let mut observed = ShotRecord::zeros(grid.nt, nr, j);
            let mut sources = Vec::new();
            for (w, exp) in e.iter().zip(sequential.experiments()) {
                observed.axpy(*w, &exp.observed);
                sources.extend(exp.sources.iter().map(|s| s.scaled(*w)));
            }
            Ok(Experiment { observed, sources })
        })
        .collect()
}

/// Supershot data for an explicit encoding matrix (rows are encodings).
pub fn encode_with_weights(sequential: &Dataset, weights: &[Vec<f64>], sigma2: f64) -> Result<Dataset> {
    Dataset::new(
        sequential.m0().clone(),
        sequential.receivers().to_vec(),
        encode_experiments(sequential, weights)?,
        sigma2,
    )
}

/// `measurement_variance + Var(clean - (background + born))` over all samples.
pub fn estimate_sigma2(sim: &SimulatedData, measurement_variance: f64) -> Result<f64> {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut residuals = Vec::with_capacity(sim.clean.len());
    for ((c, b), j) in sim.clean.iter().zip(&sim.background).zip(&sim.born) {
        let e = c.minus(b)?.minus(j)?;
        sum += e.traces.iter().sum::<f64>();
        count += e.len();
        residuals.push(e);
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no data samples".into()));
    }
    let mean = sum / count as f64;
    let var = residuals
        .iter()
        .flat_map(|e| e.traces.iter())
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    Ok(measurement_variance + var)
}

/// Deep-prior objective that draws a fresh encoding of the sequential
/// residuals at every call; the draw index advances with each call, so a
/// sequential chain is reproducible from `seed`.
pub struct RedrawEncodedPosterior<'a> {
    pub posterior: DeepPriorPosterior<'a>,
    pub seed: u64,
    counter: AtomicU64,
}

impl<'a> RedrawEncodedPosterior<'a> {
    /// `posterior.dataset` must hold the sequential shots.
    pub fn new(posterior: DeepPriorPosterior<'a>, seed: u64) -> Self {
        Self {
            posterior,
            seed,
            counter: AtomicU64::new(0),
        }
    }
}

impl StochasticObjective for RedrawEncodedPosterior<'_> {
    fn dim(&self) -> usize {
        self.posterior.arch.n_params()
    }

    fn n_terms(&self) -> usize {
        self.posterior.dataset.n()
    }

    /// The term index is ignored; each call uses the next encoding draw.
    fn term(&self, x: &[f64], _i: usize) -> Result<(f64, Vec<f64>)> {
        let post = &self.posterior;
        let seq = post.dataset;
        let draw = self.counter.fetch_add(1, Ordering::SeqCst);
        let mut r = rng::split(self.seed, rng::stream::ENCODING, draw);
        let e = rng::standard_normal_vec(&mut r, seq.n());
        let grid = *seq.grid();
        let nr = seq.receivers().len();
        let mut residual = ShotRecord::zeros(grid.nt, nr, 0);
        let mut sources = Vec::new();
        for (i, w) in e.iter().enumerate() {
            residual.axpy(*w, seq.residual(i)?);
            sources.extend(seq.experiments()[i].sources.iter().map(|s| s.scaled(*w)));
        }
        let geom = AcquisitionGeometry::new(seq.receivers().to_vec(), sources.clone());
        let modeler = BornModeler::new(seq.m0(), &sources, &geom)?;
        let weights = NetworkWeights::from_values(&post.arch, x.to_vec())?;
        let pass = network_forward(&post.arch, &post.z, &weights)?;
        let dm = ModelPerturbation::new(grid, pass.image().to_vec())?;
        let r = modeler.forward(&dm)?.minus(&residual)?;
        // E[|sum_i e_i r_i|^2] = sum_i |r_i|^2, so one draw is unbiased for
        // the full sequential misfit.
        let scale = 1.0 / seq.sigma2();
        let back = modeler.adjoint(&r)?;
        let cot: Vec<f64> = back.values().iter().map(|b| scale * b).collect();
        let mut grad = network_vjp(&pass, &cot)?;
        let l2 = post.lambda * post.lambda;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += l2 * v;
        }
        let prior = 0.5 * l2 * x.iter().map(|v| v * v).sum::<f64>();
        Ok((0.5 * scale * r.norm_sq() + prior, grad))
    }
}
