use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dip_imaging::autodiff::{directional_check, gradient_check};
use dip_imaging::harness::{
    build_toy, clip_of, load_ensemble, prepare, prior_for, run_experiment_in, stage, summarize, write_encoding,
    write_simulation, write_summary, ExperimentConfig, Outputs, Preset, Timings, CONFIG_KEYS,
};
use dip_imaging::inference::{dry_run, write_diagnostics_csv, StochasticObjective};
use dip_imaging::prior::{init_latent, sample_prior_weights};
use dip_imaging::rng;
use dip_imaging::wave::{dot_product_test, AcquisitionGeometry};

#[derive(Parser)]
#[command(name = "dip", version, about = "Deep-prior Bayesian seismic imaging experiments", after_long_help = config_help())]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in config when no --config is given.
    #[arg(long, global = true, default_value = "desk", value_parser = ["smoke", "desk", "paper"])]
    preset: String,
    /// Sets the data, latent and chain seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Toy model and noisy sequential shot records.
    Simulate,
    /// Simulate, then mix the shots into supershots.
    Encode,
    /// Maximum-likelihood image by SGD on dm.
    Mle,
    /// MAP network weights by SGD.
    Map,
    /// SGLD chain; writes the thinned samples.
    Sgld {
        /// Count retained iterations without stepping.
        #[arg(long)]
        dry_run: bool,
    },
    /// Posterior summaries from the samples in --out.
    Stats,
    /// Prior-predictive mean and std of the network output.
    PriorStats,
    /// Adjoint test of the Born operator for each source.
    DotTest {
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Finite-difference check of the SGLD gradient.
    Gradcheck {
        /// Experiment index of the stochastic term.
        #[arg(long, default_value_t = 0)]
        term: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Full pipeline: simulate, encode, MLE, MAP, SGLD, statistics.
    Run,
    /// Print the resolved config as TOML.
    ShowConfig,
}

fn config_help() -> String {
    let mut s = String::from("Config keys (TOML sections, unknown keys are rejected):\n");
    for (k, v) in CONFIG_KEYS {
        s.push_str(&format!("  {k:<58} {v}\n"));
    }
    s
}

fn resolve(g: &Global) -> Result<ExperimentConfig> {
    let mut c = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::preset(g.preset.parse::<Preset>()?),
    };
    if let Some(s) = g.seed {
        c = c.with_seed(s);
    }
    if let Some(o) = &g.out {
        c.output_dir = o.to_string_lossy().into_owned();
    }
    c.validate()?;
    Ok(c)
}

fn outputs(c: &ExperimentConfig) -> Result<Outputs> {
    Ok(Outputs::create(Path::new(&c.output_dir), &c.hash())?)
}

fn execute(cli: Cli) -> Result<()> {
    let c = resolve(&cli.global).context("stage `config`")?;
    let mut t = Timings::new();
    match cli.command {
        Command::ShowConfig => print!("{}", c.to_toml()?),
        Command::Simulate => {
            let prep = prepare(&c, &mut t)?;
            let mut out = outputs(&c)?;
            stage(&mut t, "write", || write_simulation(&mut out, &prep))?;
            println!(
                "source amplitude {:.6e}\ndata SNR {:.3} dB\nsigma2 {:.6}",
                prep.source_amplitude, prep.snr_db, prep.sigma2
            );
        }
        Command::Encode => {
            let prep = prepare(&c, &mut t)?;
            let mut out = outputs(&c)?;
            stage(&mut t, "write", || {
                write_simulation(&mut out, &prep)?;
                write_encoding(&mut out, &prep)
            })?;
            println!(
                "{} supershots, encoded sigma2 {:.6}",
                prep.encoded.n(),
                prep.encoded.sigma2()
            );
        }
        Command::Mle => {
            let prep = prepare(&c, &mut t)?;
            let mut out = outputs(&c)?;
            let r = stage(&mut t, "mle", || {
                let r = prep.mle()?;
                out.image("mle.f64", &r.image)?;
                out.pgm("mle.pgm", r.image.values(), &prep.grid, 0.0)?;
                write_diagnostics_csv(&out.path("mle_trace.csv"), &r.trace)?;
                Ok(r)
            })?;
            println!(
                "mle: {} iterations (early stop {}), step {:.4e}, relative error {:.6}",
                r.iterations,
                r.stopped_early,
                r.step,
                r.image.relative_error(&prep.toy.dm)
            );
        }
        Command::Map => {
            let prep = prepare(&c, &mut t)?;
            let mut out = outputs(&c)?;
            let r = stage(&mut t, "map", || {
                let r = prep.map()?;
                out.image("map.f64", &r.image)?;
                out.pgm("map.pgm", r.image.values(), &prep.grid, 0.0)?;
                write_diagnostics_csv(&out.path("map_trace.csv"), &r.trace)?;
                Ok(r)
            })?;
            println!("map: relative error {:.6}", r.image.relative_error(&prep.toy.dm));
        }
        Command::Sgld { dry_run: true } => {
            let kept = stage(&mut t, "sgld", || dry_run(&c.sgld_config()))?;
            println!(
                "{} of {} iterations retained (first {:?}, last {:?})",
                kept.len(),
                c.sgld.total_iterations,
                kept.first(),
                kept.last()
            );
        }
        Command::Sgld { dry_run: false } => {
            let prep = prepare(&c, &mut t)?;
            let mut out = outputs(&c)?;
            let run = stage(&mut t, "sgld", || {
                let run = prep.sgld()?;
                write_diagnostics_csv(&out.path("sgld_diagnostics.csv"), &run.diagnostics)?;
                let g = prep.grid;
                let flat: Vec<f64> = run.ensemble.samples.iter().flatten().copied().collect();
                out.array(
                    "samples.f64",
                    &flat,
                    &[run.ensemble.len(), g.nz, g.nx],
                    "s2/km2",
                    Some(&g),
                )?;
                let rows: Vec<Vec<f64>> = run
                    .ensemble
                    .iterations
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| vec![j as f64, k as f64])
                    .collect();
                out.csv("sample_iterations.csv", &["sample", "iteration"], &rows)?;
                Ok(run)
            })?;
            println!("sgld: {} samples kept", run.ensemble.len());
        }
        Command::Stats => {
            let dir = PathBuf::from(&c.output_dir);
            let (grid, toy) = stage(&mut t, "toy", || build_toy(&c))?;
            let ensemble = stage(&mut t, "load", || load_ensemble(&dir, &c))?;
            let arch = c.architecture();
            let prior = stage(&mut t, "prior-stats", || {
                let z = init_latent(&arch, c.seeds.latent)?;
                prior_for(&c, &arch, &z, &grid)
            })?;
            let s = stage(&mut t, "stats", || {
                let s = summarize(&c, &ensemble, &prior, &toy.dm)?;
                let mut out = Outputs::create(&dir, &c.hash())?;
                write_summary(&mut out, &ensemble, &prior, &s, &toy.dm)?;
                Ok(s)
            })?;
            println!("samples {}", ensemble.len());
            println!("bma relative error {:.6}", s.bma.relative_error(&toy.dm));
            println!(
                "std reflector {:.4e} homogeneous {:.4e} ratio {:.3}",
                s.localization.reflector,
                s.localization.homogeneous,
                s.localization.ratio()
            );
            for p in &s.probes {
                println!(
                    "probe ({}, {}) m: posterior std {:.4e}, prior std {:.4e}",
                    p.x_m, p.z_m, p.posterior_std, p.prior_std
                );
            }
        }
        Command::PriorStats => {
            let grid = c.build_grid()?;
            let arch = c.architecture();
            let prior = stage(&mut t, "prior-stats", || {
                let z = init_latent(&arch, c.seeds.latent)?;
                prior_for(&c, &arch, &z, &grid)
            })?;
            let mut out = outputs(&c)?;
            stage(&mut t, "write", || {
                out.array(
                    "prior_mean.f64",
                    &prior.mean,
                    &[grid.nz, grid.nx],
                    "s2/km2",
                    Some(&grid),
                )?;
                out.array("prior_std.f64", &prior.std, &[grid.nz, grid.nx], "s2/km2", Some(&grid))?;
                let std = dip_imaging::wave::ModelPerturbation::new(grid, prior.std.clone())?;
                out.pgm("prior_mean.pgm", &prior.mean, &grid, clip_of(&std))?;
                out.pgm_positive("prior_std.pgm", &prior.std, &grid)
            })?;
            let n = prior.std.len() as f64;
            println!(
                "{} samples: mean |mean| {:.4e}, mean std {:.4e}",
                prior.n_samples,
                prior.mean.iter().map(|v| v.abs()).sum::<f64>() / n,
                prior.std.iter().sum::<f64>() / n
            );
        }
        Command::DotTest { trials } => {
            let worst = stage(&mut t, "dot-test", || {
                let (grid, toy) = build_toy(&c)?;
                let (receivers, sources) = c.acquisition.build(&grid)?;
                let mut worst: f64 = 0.0;
                for (i, s) in sources.iter().enumerate() {
                    let geom = AcquisitionGeometry::new(receivers.clone(), vec![s.clone()]);
                    let e = dot_product_test(&toy.m0, std::slice::from_ref(s), &geom, trials, c.seeds.data + i as u64)?;
                    println!("source {i}: max relative mismatch {e:.3e}");
                    worst = worst.max(e);
                }
                Ok(worst)
            })?;
            println!("worst {worst:.3e}");
        }
        Command::Gradcheck { term, step } => {
            let prep = prepare(&c, &mut t)?;
            stage(&mut t, "gradcheck", || {
                let post = prep.posterior()?;
                let w = sample_prior_weights(&prep.arch, c.sgld.lambda, c.seeds.chain)?.into_values();
                let (_, grad) = post.term(&w, term)?;
                let f = |x: &[f64]| post.term(x, term).map(|(v, _)| v);
                let coords: Vec<usize> = prep.arch.layout().iter().map(|b| b.kernel_offset).collect();
                let per_layer = gradient_check(f, &w, &grad, step, Some(&coords))?;
                println!(
                    "first kernel entry of each of {} layers: max relative error {per_layer:.3e}",
                    coords.len()
                );
                let mut r = rng::seeded(c.seeds.chain, rng::stream::DOT_TEST);
                for k in 0..3 {
                    let dir = rng::standard_normal_vec(&mut r, w.len());
                    let e = directional_check(f, &w, &grad, &dir, step)?;
                    println!("random direction {k}: relative error {e:.3e}");
                }
                Ok(())
            })?;
        }
        Command::Run => {
            let m = run_experiment_in(&c, Path::new(&c.output_dir))?;
            println!("config hash {}", m.config_hash);
            println!("data SNR {:.3} dB, sigma2 {:.4}", m.data_snr_db, m.sigma2);
            println!(
                "relative error: mle {:.6}, map {:.6}, bma {:.6}",
                m.mle.relative_error, m.map_relative_error, m.bma_relative_error
            );
            println!(
                "std ratio reflector/homogeneous {:.3} over {} samples",
                m.localization_ratio, m.ensemble_size
            );
            for p in &m.probes {
                println!(
                    "probe ({}, {}) m: posterior std {:.4e}, prior std {:.4e}",
                    p.x_m, p.z_m, p.posterior_std, p.prior_std
                );
            }
            println!("outputs in {}", c.output_dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
