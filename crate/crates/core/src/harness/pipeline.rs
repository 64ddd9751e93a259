use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::checksum::sha256_hex;
use super::config::{ExperimentConfig, Preset, Seeds};
use super::io::{read_array, write_array, write_csv, write_pgm, write_pgm_positive};
use super::simulate::{
    calibrate_amplitude, encode_simultaneous, estimate_sigma2, simulate_data, RedrawEncodedPosterior, SimulatedData,
};
use super::toy::{make_toy_model, ToyModel};
use crate::error::{Error, Result};
use crate::inference::{
    run_map, run_mle, run_sgld_with, write_diagnostics_csv, Dataset, DeepPriorPosterior, MapResult, MleResult, SgldRun,
};
use crate::prior::{init_latent, prior_statistics_with_probes, LatentInput, NetworkArchitecture, PriorStatistics};
use crate::stats::{
    bma_mean, nearest_cell, point_histogram, pointwise_std, std_localization, std_profiles, ChainMetadata, Histogram,
    PosteriorEnsemble, StdLocalization, StdProfile,
};
use crate::wave::{Grid, ModelPerturbation, ShotRecord};

const DM_UNITS: &str = "s2/km2";

/// Wall time per stage, in seconds.
pub type Timings = BTreeMap<String, f64>;

/// Runs `f` as stage `name`: errors are tagged with the name and the
/// elapsed time is recorded.
pub fn stage<T>(timings: &mut Timings, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    let t = Instant::now();
    let r = f().map_err(|e| e.in_stage(name));
    timings.insert(name.to_string(), t.elapsed().as_secs_f64());
    r
}

/// Output directory that records the checksum of every deterministic file.
pub struct Outputs {
    dir: PathBuf,
    config_hash: String,
    pub checksums: BTreeMap<String, String>,
}

impl Outputs {
    pub fn create(dir: &Path, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            checksums: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn track(&mut self, name: &str) -> Result<()> {
        let p = self.path(name);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        self.checksums.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes `name` and `name.hdr`; both are checksummed.
    pub fn array(
        &mut self,
        name: &str,
        values: &[f64],
        shape: &[usize],
        units: &str,
        grid: Option<&Grid>,
    ) -> Result<()> {
        write_array(
            &self.path(name),
            values,
            shape,
            units,
            grid,
            &[("config_hash", self.config_hash.clone())],
        )?;
        self.track(name)?;
        self.track(&format!("{name}.hdr"))
    }

    pub fn image(&mut self, name: &str, m: &ModelPerturbation) -> Result<()> {
        let g = m.grid();
        self.array(name, m.values(), &[g.nz, g.nx], DM_UNITS, Some(g))
    }

    pub fn pgm(&mut self, name: &str, values: &[f64], grid: &Grid, clip: f64) -> Result<()> {
        write_pgm(&self.path(name), values, grid.nz, grid.nx, clip)?;
        self.track(name)
    }

    pub fn pgm_positive(&mut self, name: &str, values: &[f64], grid: &Grid) -> Result<()> {
        write_pgm_positive(&self.path(name), values, grid.nz, grid.nx)?;
        self.track(name)
    }

    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        write_csv(&self.path(name), columns, rows)?;
        self.track(name)
    }
}

/// Everything upstream of the estimators.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub grid: Grid,
    pub toy: ToyModel,
    pub source_amplitude: f64,
    /// Sequential data; its `sigma2` is the estimate.
    pub sim: SimulatedData,
    pub sigma2: f64,
    pub snr_db: f64,
    pub encoded: Dataset,
    pub encoding_weights: Vec<Vec<f64>>,
    pub arch: NetworkArchitecture,
    pub latent: LatentInput,
}

/// Toy model only.
pub fn build_toy(config: &ExperimentConfig) -> Result<(Grid, ToyModel)> {
    let grid = config.build_grid()?;
    let toy = make_toy_model(&config.toy_spec(&grid), &grid)?;
    Ok((grid, toy))
}

/// Stages `toy`, `simulate`, `sigma2`, `encode` and `network`.
pub fn prepare(config: &ExperimentConfig, timings: &mut Timings) -> Result<Prepared> {
    stage(timings, "config", || config.validate())?;
    let (grid, toy) = stage(timings, "toy", || build_toy(config))?;
    let d = &config.data;
    let (sim, source_amplitude) = stage(timings, "simulate", || {
        let (receivers, sources) = config.acquisition.build(&grid)?;
        let a = match d.target_snr_db {
            Some(t) => calibrate_amplitude(&toy, &receivers, &sources, d.noise_variance, t, d.linear)?,
            None => d.source_amplitude,
        };
        let sources: Vec<_> = sources.iter().map(|s| s.scaled(a)).collect();
        Ok((
            simulate_data(
                &toy,
                &receivers,
                &sources,
                d.noise_variance,
                config.seeds.data,
                d.linear,
            )?,
            a,
        ))
    })?;
    let mut sim = sim;
    let (sigma2, snr_db) = stage(timings, "sigma2", || {
        let s2 = estimate_sigma2(&sim, d.noise_variance)?;
        let s2 = if s2 > 0.0 { s2 } else { 1.0 };
        sim.dataset.set_sigma2(s2)?;
        let snr = if d.noise_variance > 0.0 {
            sim.snr_db()?
        } else {
            f64::INFINITY
        };
        Ok((s2, snr))
    })?;
    let (encoded, encoding_weights) = stage(timings, "encode", || {
        let (enc, w) = encode_simultaneous(&sim.dataset, d.n_encodings, config.seeds.data, false)?;
        enc.prepare()?;
        if d.redraw_encodings {
            sim.dataset.prepare()?;
        }
        Ok((enc, w))
    })?;
    let arch = config.architecture();
    let latent = stage(timings, "network", || init_latent(&arch, config.seeds.latent))?;
    log::info!(
        "data: amplitude {source_amplitude:.4e}, SNR {snr_db:.2} dB, sigma2 {sigma2:.4}, {} parameters",
        arch.n_params()
    );
    Ok(Prepared {
        config: config.clone(),
        config_hash: config.hash(),
        grid,
        toy,
        source_amplitude,
        sim,
        sigma2,
        snr_db,
        encoded,
        encoding_weights,
        arch,
        latent,
    })
}

impl Prepared {
    /// Posterior on the fixed supershots.
    pub fn posterior(&self) -> Result<DeepPriorPosterior<'_>> {
        DeepPriorPosterior::new(
            &self.encoded,
            self.arch.clone(),
            self.latent.clone(),
            self.config.sgld.lambda,
        )
    }

    pub fn mle(&self) -> Result<MleResult> {
        run_mle(&self.encoded, &self.config.mle_config())
    }

    pub fn map(&self) -> Result<MapResult> {
        run_map(&self.posterior()?, &self.config.map_config())
    }

    /// SGLD on the fixed supershots, or on a fresh encoding per update when
    /// `data.redraw_encodings` is set.
    pub fn sgld(&self) -> Result<SgldRun> {
        let cfg = self.config.sgld_config();
        let post = self.posterior()?;
        if self.config.data.redraw_encodings {
            let seq = DeepPriorPosterior::new(&self.sim.dataset, self.arch.clone(), self.latent.clone(), cfg.lambda)?;
            let redraw = RedrawEncodedPosterior::new(seq, self.config.seeds.data);
            run_sgld_with(&post, &redraw, &cfg, &self.config_hash)
        } else {
            run_sgld_with(&post, &post, &cfg, &self.config_hash)
        }
    }

    pub fn prior(&self) -> Result<PriorStatistics> {
        prior_for(&self.config, &self.arch, &self.latent, &self.grid)
    }
}

fn probe_cells(config: &ExperimentConfig, grid: &Grid) -> Result<Vec<usize>> {
    config
        .stats
        .probes
        .iter()
        .map(|&[x, z]| nearest_cell(grid, (x, z)).map(|(iz, ix)| iz * grid.nx + ix))
        .collect()
}

/// Prior-predictive statistics with the chain seed's prior-statistics stream.
pub fn prior_for(
    config: &ExperimentConfig,
    arch: &NetworkArchitecture,
    z: &LatentInput,
    grid: &Grid,
) -> Result<PriorStatistics> {
    prior_statistics_with_probes(
        arch,
        z,
        config.sgld.lambda,
        config.stats.prior_samples,
        config.seeds.chain,
        &probe_cells(config, grid)?,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub x_m: f64,
    pub z_m: f64,
    /// `(iz, ix)`, 0-based.
    pub cell: (usize, usize),
    pub posterior_std: f64,
    pub prior_std: f64,
}

/// Posterior summaries of one ensemble against the prior and the truth.
pub struct Summary {
    pub bma: ModelPerturbation,
    pub std: ModelPerturbation,
    pub profiles: Vec<StdProfile>,
    pub prior_profiles: Vec<StdProfile>,
    pub histograms: Vec<Histogram>,
    pub prior_histograms: Vec<Histogram>,
    pub localization: StdLocalization,
    pub probes: Vec<ProbeReport>,
}

pub fn summarize(
    config: &ExperimentConfig,
    ensemble: &PosteriorEnsemble,
    prior: &PriorStatistics,
    dm_true: &ModelPerturbation,
) -> Result<Summary> {
    let grid = ensemble.grid;
    let bma = bma_mean(ensemble)?;
    let std = pointwise_std(ensemble)?;
    let s = &config.stats;
    let profiles = std_profiles(&std, &s.profile_x_m)?;
    let prior_std = ModelPerturbation::new(grid, prior.std.clone())?;
    let prior_profiles = std_profiles(&prior_std, &s.profile_x_m)?;
    let mut histograms = Vec::new();
    let mut prior_histograms = Vec::new();
    let mut probes = Vec::new();
    for (k, &[x, z]) in s.probes.iter().enumerate() {
        let h = point_histogram(&ensemble.samples, &grid, (x, z), s.histogram_bins)?;
        let cell = h.cell.0 * grid.nx + h.cell.1;
        let prior_vals = prior
            .probes
            .iter()
            .find(|(c, _)| *c == cell)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::InvalidArgument(format!("prior statistics lack probe {k}")))?;
        let prior_samples: Vec<Vec<f64>> = prior_vals
            .iter()
            .map(|&v| {
                let mut img = vec![0.0; grid.cells()];
                img[cell] = v;
                img
            })
            .collect();
        let ph = point_histogram(&prior_samples, &grid, (x, z), s.histogram_bins)?;
        probes.push(ProbeReport {
            x_m: x,
            z_m: z,
            cell: h.cell,
            posterior_std: h.sample_std(),
            prior_std: ph.sample_std(),
        });
        histograms.push(h);
        prior_histograms.push(ph);
    }
    Ok(Summary {
        localization: std_localization(&std, dm_true)?,
        bma,
        std,
        profiles,
        prior_profiles,
        histograms,
        prior_histograms,
        probes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MleReport {
    pub relative_error: f64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub step: f64,
}

/// Run record written as `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub preset: Option<Preset>,
    pub crate_version: String,
    /// Grid, shot count and encodings are scaled down from the 369-shot
    /// field-scale experiment.
    pub desk_scaled: bool,
    pub seeds: Seeds,
    pub n_encodings: usize,
    pub redraw_encodings: bool,
    pub linear_data: bool,
    pub grid: Grid,
    pub architecture: String,
    pub n_params: usize,
    pub source_amplitude: f64,
    pub data_snr_db: f64,
    pub measurement_variance: f64,
    pub sigma2: f64,
    pub encoded_sigma2: f64,
    pub mle: MleReport,
    pub map_relative_error: f64,
    pub bma_relative_error: f64,
    pub ensemble_size: usize,
    pub localization: StdLocalization,
    pub localization_ratio: f64,
    pub probes: Vec<ProbeReport>,
    pub timings_s: Timings,
    /// SHA-256 of every deterministic output file.
    pub checksums: BTreeMap<String, String>,
}

fn records_array(records: &[ShotRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| r.traces.iter().copied()).collect()
}

/// Toy model, sequential and encoded data arrays.
pub fn write_inputs(out: &mut Outputs, prep: &Prepared) -> Result<()> {
    write_simulation(out, prep)?;
    write_encoding(out, prep)
}

/// Toy model and sequential data arrays.
pub fn write_simulation(out: &mut Outputs, prep: &Prepared) -> Result<()> {
    let g = &prep.grid;
    let toy = &prep.toy;
    out.array("velocity.f64", &toy.velocity, &[g.nz, g.nx], "m/s", Some(g))?;
    out.array("m_true.f64", toy.m_true.values(), &[g.nz, g.nx], DM_UNITS, Some(g))?;
    out.array("m0.f64", toy.m0.values(), &[g.nz, g.nx], DM_UNITS, Some(g))?;
    out.image("dm_true.f64", &toy.dm)?;
    let nr = prep.sim.dataset.receivers().len();
    let ns = prep.sim.dataset.n();
    let observed: Vec<ShotRecord> = prep
        .sim
        .dataset
        .experiments()
        .iter()
        .map(|e| e.observed.clone())
        .collect();
    out.array(
        "observed.f64",
        &records_array(&observed),
        &[ns, g.nt, nr],
        "pressure",
        Some(g),
    )?;
    out.array(
        "noise.f64",
        &records_array(&prep.sim.noise),
        &[ns, g.nt, nr],
        "pressure",
        Some(g),
    )?;
    out.array(
        "born.f64",
        &records_array(&prep.sim.born),
        &[ns, g.nt, nr],
        "pressure",
        Some(g),
    )
}

/// Supershot data and the encoding matrix (rows are encodings).
pub fn write_encoding(out: &mut Outputs, prep: &Prepared) -> Result<()> {
    let g = &prep.grid;
    let nr = prep.encoded.receivers().len();
    let ns = prep.sim.dataset.n();
    let ne = prep.encoded.n();
    let encoded: Vec<ShotRecord> = prep.encoded.experiments().iter().map(|e| e.observed.clone()).collect();
    out.array(
        "encoded.f64",
        &records_array(&encoded),
        &[ne, g.nt, nr],
        "pressure",
        Some(g),
    )?;
    let w: Vec<f64> = prep.encoding_weights.iter().flatten().copied().collect();
    out.array("encoding_weights.f64", &w, &[ne, ns], "1", None)
}

/// Symmetric display clip: three times the mean pointwise std.
pub fn clip_of(std: &ModelPerturbation) -> f64 {
    let v = std.values();
    3.0 * v.iter().sum::<f64>() / v.len() as f64
}

/// Arrays, images and CSVs of the posterior summaries.
pub fn write_summary(
    out: &mut Outputs,
    ensemble: &PosteriorEnsemble,
    prior: &PriorStatistics,
    summary: &Summary,
    dm_true: &ModelPerturbation,
) -> Result<()> {
    let g = ensemble.grid;
    let flat: Vec<f64> = ensemble.samples.iter().flatten().copied().collect();
    out.array("samples.f64", &flat, &[ensemble.len(), g.nz, g.nx], DM_UNITS, Some(&g))?;
    out.csv(
        "sample_iterations.csv",
        &["sample", "iteration"],
        &ensemble
            .iterations
            .iter()
            .enumerate()
            .map(|(j, &k)| vec![j as f64, k as f64])
            .collect::<Vec<_>>(),
    )?;
    out.image("bma.f64", &summary.bma)?;
    out.image("std.f64", &summary.std)?;
    out.array("prior_mean.f64", &prior.mean, &[g.nz, g.nx], DM_UNITS, Some(&g))?;
    out.array("prior_std.f64", &prior.std, &[g.nz, g.nx], DM_UNITS, Some(&g))?;
    let clip = clip_of(&summary.std);
    out.pgm("dm_true.pgm", dm_true.values(), &g, clip)?;
    out.pgm("bma.pgm", summary.bma.values(), &g, clip)?;
    out.pgm("prior_mean.pgm", &prior.mean, &g, clip)?;
    out.pgm_positive("std.pgm", summary.std.values(), &g)?;
    out.pgm_positive("prior_std.pgm", &prior.std, &g)?;

    let mut cols = vec!["z_m".to_string()];
    cols.extend(
        summary
            .profiles
            .iter()
            .map(|p| format!("posterior_std_col{}", p.column)),
    );
    cols.extend(
        summary
            .prior_profiles
            .iter()
            .map(|p| format!("prior_std_col{}", p.column)),
    );
    let rows: Vec<Vec<f64>> = (0..g.nz)
        .map(|iz| {
            let mut r = vec![iz as f64 * g.dz];
            r.extend(summary.profiles.iter().map(|p| p.values[iz]));
            r.extend(summary.prior_profiles.iter().map(|p| p.values[iz]));
            r
        })
        .collect();
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    out.csv("profiles.csv", &cols_ref, &rows)?;

    let mut rows = Vec::new();
    for (k, (h, ph)) in summary.histograms.iter().zip(&summary.prior_histograms).enumerate() {
        for (kind, hist) in [(0.0, h), (1.0, ph)] {
            for (b, &c) in hist.counts.iter().enumerate() {
                rows.push(vec![k as f64, kind, hist.edges[b], hist.edges[b + 1], c as f64]);
            }
        }
    }
    out.csv(
        "histograms.csv",
        &["probe", "prior", "bin_lo", "bin_hi", "count"],
        &rows,
    )?;
    let mut cols = vec!["sample".to_string()];
    cols.extend((0..summary.histograms.len()).map(|k| format!("probe{k}")));
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    let post_rows: Vec<Vec<f64>> = (0..ensemble.len())
        .map(|j| {
            std::iter::once(j as f64)
                .chain(summary.histograms.iter().map(|h| h.values[j]))
                .collect()
        })
        .collect();
    out.csv("probe_samples.csv", &cols_ref, &post_rows)?;
    let prior_rows: Vec<Vec<f64>> = (0..prior.n_samples)
        .map(|j| {
            std::iter::once(j as f64)
                .chain(summary.prior_histograms.iter().map(|h| h.values[j]))
                .collect()
        })
        .collect();
    out.csv("prior_probe_samples.csv", &cols_ref, &prior_rows)
}

/// The full protocol: simulate, encode, estimate `sigma2`, run MLE, MAP and
/// SGLD, summarize and write everything under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    run_experiment_in(config, Path::new(&config.output_dir))
}

pub fn run_experiment_in(config: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    let mut timings = Timings::new();
    let mut out = stage(&mut timings, "output", || Outputs::create(dir, &config.hash()))?;
    let prep = prepare(config, &mut timings)?;
    stage(&mut timings, "write-inputs", || {
        fs::write(out.path("config.toml"), config.to_toml()?).map_err(|e| Error::io(out.path("config.toml"), e))?;
        write_inputs(&mut out, &prep)
    })?;
    let dm_true = &prep.toy.dm;
    let mle = stage(&mut timings, "mle", || {
        let r = prep.mle()?;
        out.image("mle.f64", &r.image)?;
        write_diagnostics_csv(&out.path("mle_trace.csv"), &r.trace)?;
        Ok(r)
    })?;
    let map = stage(&mut timings, "map", || {
        let r = prep.map()?;
        out.image("map.f64", &r.image)?;
        write_diagnostics_csv(&out.path("map_trace.csv"), &r.trace)?;
        Ok(r)
    })?;
    let run = stage(&mut timings, "sgld", || {
        let r = prep.sgld()?;
        write_diagnostics_csv(&out.path("sgld_diagnostics.csv"), &r.diagnostics)?;
        Ok(r)
    })?;
    let prior = stage(&mut timings, "prior-stats", || prep.prior())?;
    let summary = stage(&mut timings, "stats", || {
        let s = summarize(config, &run.ensemble, &prior, dm_true)?;
        write_summary(&mut out, &run.ensemble, &prior, &s, dm_true)?;
        let clip = clip_of(&s.std);
        out.pgm("mle.pgm", mle.image.values(), &prep.grid, clip)?;
        out.pgm("map.pgm", map.image.values(), &prep.grid, clip)?;
        Ok(s)
    })?;
    let manifest = Manifest {
        config_hash: prep.config_hash.clone(),
        preset: config.preset,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        desk_scaled: true,
        seeds: config.seeds,
        n_encodings: config.data.n_encodings,
        redraw_encodings: config.data.redraw_encodings,
        linear_data: config.data.linear,
        grid: prep.grid,
        architecture: prep.arch.descriptor(),
        n_params: prep.arch.n_params(),
        source_amplitude: prep.source_amplitude,
        data_snr_db: prep.snr_db,
        measurement_variance: config.data.noise_variance,
        sigma2: prep.sigma2,
        encoded_sigma2: prep.encoded.sigma2(),
        mle: MleReport {
            relative_error: mle.image.relative_error(dm_true),
            iterations: mle.iterations,
            stopped_early: mle.stopped_early,
            step: mle.step,
        },
        map_relative_error: map.image.relative_error(dm_true),
        bma_relative_error: summary.bma.relative_error(dm_true),
        ensemble_size: run.ensemble.len(),
        localization: summary.localization,
        localization_ratio: summary.localization.ratio(),
        probes: summary.probes.clone(),
        timings_s: timings.clone(),
        checksums: out.checksums.clone(),
    };
    write_manifest(&out.path("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rebuilds an ensemble from `samples.f64` and `sample_iterations.csv` in `dir`.
pub fn load_ensemble(dir: &Path, config: &ExperimentConfig) -> Result<PosteriorEnsemble> {
    let (values, header) = read_array(&dir.join("samples.f64"))?;
    let grid = header.grid.ok_or_else(|| Error::Format {
        path: dir.join("samples.f64.hdr"),
        reason: "missing grid".into(),
    })?;
    if header.shape.len() != 3 || header.shape[1..] != [grid.nz, grid.nx] {
        return Err(Error::Format {
            path: dir.join("samples.f64.hdr"),
            reason: format!("expected shape [T, {}, {}], got {:?}", grid.nz, grid.nx, header.shape),
        });
    }
    let iters_path = dir.join("sample_iterations.csv");
    let text = fs::read_to_string(&iters_path).map_err(|e| Error::io(&iters_path, e))?;
    let iterations: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse::<f64>().ok())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format {
                    path: iters_path.clone(),
                    reason: format!("bad row `{l}`"),
                })
        })
        .collect::<Result<_>>()?;
    let s = &config.sgld;
    let mut e = PosteriorEnsemble::new(
        grid,
        ChainMetadata {
            seed: config.seeds.chain,
            config_hash: config.hash(),
            total_iterations: s.total_iterations,
            burn_in: s.burn_in,
            thin_every: s.thin_every,
        },
    );
    for (j, img) in values.chunks(grid.cells()).enumerate() {
        e.push(iterations.get(j).copied().unwrap_or(j), img.to_vec())?;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_errors_carry_the_name() {
        let mut t = Timings::new();
        let e = stage(&mut t, "encode", || -> Result<()> {
            Err(Error::InvalidArgument("x".into()))
        })
        .unwrap_err();
        assert!(e.to_string().contains("`encode`"));
        assert!(t.contains_key("encode"));
    }
}
