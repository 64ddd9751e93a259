//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! `cargo test --release --test acceptance -- 1 5 10` runs a subset.

use std::collections::BTreeSet;
use std::time::Instant;

use dip_imaging::autodiff::directional_check;
use dip_imaging::harness::*;
use dip_imaging::inference::*;
use dip_imaging::prior::*;
use dip_imaging::rng;
use dip_imaging::wave::*;
use dip_imaging::Result;
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn tempdir() -> Result<tempfile::TempDir> {
    tempfile::tempdir().map_err(|source| dip_imaging::Error::Io {
        path: std::env::temp_dir(),
        source,
    })
}

fn smooth_background(grid: Grid) -> Result<SquaredSlownessModel> {
    let (nz, nx) = (grid.nz, grid.nx);
    let vel: Vec<f64> = (0..grid.cells())
        .map(|k| {
            let (iz, ix) = (k / nx, k % nx);
            1800.0 + 800.0 * iz as f64 / nz as f64 + 30.0 * (ix as f64 * 0.2).sin()
        })
        .collect();
    SquaredSlownessModel::from_velocity(grid, &vel)
}

fn adjoint_exactness() -> Result<Outcome> {
    let dt = Grid::stable_dt(10.0, 10.0, 2600.0, 0.8);
    let grid = Grid::new(60, 60, 10.0, 10.0, 300, dt)?.with_sponge(20, 0.01)?;
    let m0 = smooth_background(grid)?;
    let wavelet = ricker_wavelet(15.0, &grid, 0.08)?;
    let src = vec![SourceSignature::new(wavelet, (233.0, 22.0))];
    let geom = AcquisitionGeometry::new(AcquisitionGeometry::line(60, 0.0, grid.width_m(), 17.0), src.clone());
    let worst = dot_product_test(&m0, &src, &geom, 20, 0)?;
    outcome(
        worst <= 1e-10,
        format!("60x60 Born pair, 20 trials: max discrepancy {worst:.3e} (<= 1e-10)"),
    )
}

fn gradient_correctness() -> Result<Outcome> {
    let dt = Grid::stable_dt(25.0, 25.0, 3000.0, 0.9);
    let grid = Grid::new(16, 16, 25.0, 25.0, 150, dt)?.with_sponge(12, 0.012)?;
    let mut spec = default_toy_spec(&grid);
    spec.smoothing_cells = 3.0;
    let toy = make_toy_model(&spec, &grid)?;
    let acq = AcquisitionSpec {
        n_sources: 2,
        n_receivers: 16,
        source_depth_m: 20.0,
        receiver_depth_m: 20.0,
        f0: 10.0,
        t0: 0.1,
    };
    let (rec, src) = acq.build(&grid)?;
    let src: Vec<_> = src.iter().map(|s| s.scaled(1e5)).collect();
    let sim = simulate_data(&toy, &rec, &src, 2.0, 0, false)?;
    let arch = NetworkArchitecture::default_for(grid.nz, grid.nx);
    let z = init_latent(&arch, 0)?;
    let lambda = 20.0;
    let post = DeepPriorPosterior::new(&sim.dataset, arch.clone(), z, lambda)?;
    let w = sample_prior_weights(&arch, lambda, 1)?.into_values();
    let mut r = rng::seeded(2, rng::stream::DOT_TEST);
    let mut worst: f64 = 0.0;
    let layout = arch.layout();
    for i in 0..sim.dataset.n() {
        let (_, grad) = post.term(&w, i)?;
        let f = |x: &[f64]| post.term(x, i).map(|(v, _)| v);
        for block in &layout {
            let range = block.kernel_offset..block.end();
            let mut dir = vec![0.0; w.len()];
            let d = rng::standard_normal_vec(&mut r, range.len());
            let (wn, dn) = (
                w[range.clone()].iter().map(|v| v * v).sum::<f64>().sqrt(),
                d.iter().map(|v| v * v).sum::<f64>().sqrt(),
            );
            for (slot, v) in dir[range].iter_mut().zip(&d) {
                *slot = v * wn / dn;
            }
            worst = worst.max(directional_check(f, &w, &grad, &dir, 1e-5)?);
        }
        let dir = rng::standard_normal_vec(&mut r, w.len());
        let scale = w.iter().map(|v| v * v).sum::<f64>().sqrt() / dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = dir.iter().map(|v| v * scale).collect();
        worst = worst.max(directional_check(f, &w, &grad, &dir, 1e-5)?);
    }
    outcome(
        worst <= 1e-4,
        format!(
            "16x16 toy, {} layers x {} terms + full directions: max relative error {worst:.3e} (<= 1e-4)",
            layout.len(),
            sim.dataset.n()
        ),
    )
}

/// `J^(i)(x) = N (y_i - x)^2 / (2 s2) + (x - mu0)^2 / (2 tau2)`.
struct Conjugate {
    y: Vec<f64>,
    s2: f64,
    mu0: f64,
    tau2: f64,
}

impl StochasticObjective for Conjugate {
    fn dim(&self) -> usize {
        1
    }

    fn n_terms(&self) -> usize {
        self.y.len()
    }

    fn term(&self, x: &[f64], i: usize) -> Result<(f64, Vec<f64>)> {
        let n = self.y.len() as f64;
        let (d, p) = (x[0] - self.y[i], x[0] - self.mu0);
        let value = n * d * d / (2.0 * self.s2) + p * p / (2.0 * self.tau2);
        Ok((value, vec![n * d / self.s2 + p / self.tau2]))
    }
}

fn sgld_oracle() -> Result<Outcome> {
    let target = Conjugate {
        y: vec![0.9, 1.1, 1.0, 0.85, 1.15],
        s2: 0.1,
        mu0: 0.3,
        tau2: 1.0,
    };
    let n = target.y.len() as f64;
    let precision = n / target.s2 + 1.0 / target.tau2;
    let v_star = 1.0 / precision;
    let mu_star = (target.y.iter().sum::<f64>() / target.s2 + target.mu0 / target.tau2) / precision;
    let config = SgldConfig {
        epsilon: 1e-3,
        lambda: 1.0,
        total_iterations: 200_000,
        burn_in: 1000,
        thin_every: 1,
        seed: 0,
        decay_k0: None,
    };
    let mut xs = Vec::with_capacity(config.ensemble_size());
    run_chain(&target, &config, vec![0.0], |_, w| {
        xs.push(w[0]);
        Ok(())
    })?;
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    // Standard error from batch means.
    let batches = 100;
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / means.len() as f64;
    let se =
        (means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (means.len() - 1) as f64 / means.len() as f64).sqrt();
    let z = (mean - mu_star) / se;
    let rel_var = (var - v_star).abs() / v_star;
    outcome(
        z.abs() <= 3.0 && rel_var <= 0.15,
        format!(
            "1D conjugate Gaussian, eps 1e-3, 2e5 steps: mean {mean:.5} vs {mu_star:.5} ({z:+.2} SE, |z| <= 3), \
             variance {var:.5} vs {v_star:.5} ({:.1}%, <= 15%)",
            100.0 * rel_var
        ),
    )
}

fn linearization_order() -> Result<Outcome> {
    let grid = Grid::new(20, 24, 10.0, 10.0, 160, 1e-3)?.with_sponge(6, 0.02)?;
    let m0 = smooth_background(grid)?;
    let wavelet = ricker_wavelet(15.0, &grid, 1.0 / 15.0)?;
    let src = vec![SourceSignature::new(wavelet, (grid.width_m() * 0.37, 23.0))];
    let geom = AcquisitionGeometry::new(AcquisitionGeometry::line(12, 0.0, grid.width_m(), 25.0), src.clone());
    let dm = ModelPerturbation::new(
        grid,
        (0..grid.cells())
            .map(|k| {
                let (iz, ix) = (k / grid.nx, k % grid.nx);
                0.02 * ((iz as f64 * 0.5).sin() + (ix as f64 * 0.3).cos())
            })
            .collect(),
    )?;
    let base = solve_forward_record(&m0, &src, &geom)?;
    let born = born_forward(&m0, &src, &geom, &dm)?;
    let mut errs = Vec::new();
    for h in [1e-2, 1e-3, 1e-4] {
        let pert = solve_forward_record(&m0.perturbed(&dm, h)?, &src, &geom)?;
        let fd = pert.minus(&base)?.scaled(1.0 / h);
        errs.push(fd.minus(&born)?.norm_sq().sqrt() / born.norm_sq().sqrt());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log10()).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        min >= 0.9,
        format!(
            "errors [{}] at h = 1e-2, 1e-3, 1e-4: min order {min:.3} (>= 0.9)",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn mle_oracle() -> Result<Outcome> {
    // Sources and receivers on all four sides keep J^T J well conditioned.
    let n = 8;
    let dx = 20.0;
    let dt = Grid::stable_dt(dx, dx, 2600.0, 0.8);
    let nt = ((2.5 * n as f64 * dx / 2000.0 + 2.0 / 15.0) / dt).ceil() as usize;
    let grid = Grid::new(n, n, dx, dx, nt, dt)?.with_sponge(10, 0.02)?;
    let vel: Vec<f64> = (0..grid.cells())
        .map(|k| 2000.0 + 400.0 * (k / n) as f64 / n as f64)
        .collect();
    let m0 = SquaredSlownessModel::from_velocity(grid, &vel)?;
    let wavelet = ricker_wavelet(15.0, &grid, 1.2 / 15.0)?;
    let (l, depth) = (grid.width_m(), grid.depth_m());
    let mut receivers = AcquisitionGeometry::line(2 * n, 0.0, l, 0.0);
    receivers.extend(AcquisitionGeometry::line(2 * n, 0.0, l, depth));
    for k in 0..2 * n {
        let z = depth * k as f64 / (2 * n - 1) as f64;
        receivers.extend([(0.0, z), (l, z)]);
    }
    let mut shots = AcquisitionGeometry::line(4, 0.1 * l, 0.9 * l, 0.0);
    shots.extend(AcquisitionGeometry::line(4, 0.1 * l, 0.9 * l, depth));
    for z in [0.3 * depth, 0.7 * depth] {
        shots.extend([(0.0, z), (l, z)]);
    }
    let mut r = rng::seeded(3, rng::stream::DOT_TEST);
    let dm_true = ModelPerturbation::new(
        grid,
        rng::standard_normal_vec(&mut r, grid.cells())
            .iter()
            .map(|v| 0.01 * v)
            .collect(),
    )?;
    let cells = grid.cells();
    let mut jtj = DMatrix::<f64>::zeros(cells, cells);
    let mut jtd = DVector::<f64>::zeros(cells);
    let mut experiments = Vec::new();
    for s in &shots {
        let sources = vec![SourceSignature::new(wavelet.clone(), *s)];
        let geom = AcquisitionGeometry::new(receivers.clone(), sources.clone());
        let modeler = BornModeler::new(&m0, &sources, &geom)?;
        let columns = (0..cells)
            .map(|c| {
                let mut e = vec![0.0; cells];
                e[c] = 1.0;
                Ok(modeler.forward(&ModelPerturbation::new(grid, e)?)?.traces)
            })
            .collect::<Result<Vec<_>>>()?;
        let j = DMatrix::from_fn(columns[0].len(), cells, |row, c| columns[c][row]);
        let born = modeler.forward(&dm_true)?;
        jtj += j.transpose() * &j;
        jtd += j.transpose() * DVector::from_column_slice(&born.traces);
        let mut observed = modeler.background().clone();
        observed.axpy(1.0, &born);
        experiments.push(Experiment { observed, sources });
    }
    let ls = jtj
        .cholesky()
        .ok_or_else(|| dip_imaging::Error::InvalidArgument("normal equations are singular".into()))?
        .solve(&jtd);
    let dataset = Dataset::new(m0, receivers, experiments, 1.0)?;
    let mut config = MleConfig::new(25_000, 0);
    config.early_stopping = false;
    config.power_iterations = 30;
    let mle = run_mle(&dataset, &config)?;
    let diff = mle
        .image
        .values()
        .iter()
        .zip(ls.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let err = diff / ls.norm();
    outcome(
        err <= 0.01,
        format!(
            "{n}x{n} linear noise-free, {} shots, {} iterations: relative model error {err:.3e} vs normal equations (<= 1e-2)",
            dataset.n(),
            mle.iterations
        ),
    )
}

fn schedule_arithmetic() -> Result<Outcome> {
    let config = SgldConfig::paper_schedule(0);
    let kept = dry_run(&config)?;
    let pass = kept.len() == 140 && config.ensemble_size() == 140;
    outcome(
        pass,
        format!(
            "total {}, burn-in {}, thin {}: T = {} (== 140)",
            config.total_iterations,
            config.burn_in,
            config.thin_every,
            kept.len()
        ),
    )
}

fn desk_runs() -> Result<Vec<Manifest>> {
    (0..3u64)
        .map(|seed| {
            let dir = tempdir()?;
            let started = Instant::now();
            let m = run_experiment_in(&ExperimentConfig::desk().with_seed(seed), dir.path())?;
            eprintln!(
                "  desk seed {seed}: snr {:.2} dB, mle {:.4}, bma {:.4}, localization {:.3}, {:.0} s",
                m.data_snr_db,
                m.mle.relative_error,
                m.bma_relative_error,
                m.localization_ratio,
                started.elapsed().as_secs_f64()
            );
            Ok(m)
        })
        .collect()
}

fn overfitting(runs: &[Manifest]) -> Result<Outcome> {
    let lines: Vec<String> = runs
        .iter()
        .enumerate()
        .map(|(s, m)| {
            format!(
                "seed {s}: snr {:.2} dB, bma {:.4} vs mle {:.4}",
                m.data_snr_db, m.bma_relative_error, m.mle.relative_error
            )
        })
        .collect();
    let pass = runs
        .iter()
        .all(|m| m.data_snr_db <= -10.0 && m.bma_relative_error < m.mle.relative_error);
    outcome(pass, format!("{} (snr <= -10 dB, bma < mle)", lines.join("; ")))
}

fn localization(runs: &[Manifest]) -> Result<Outcome> {
    let ratios: Vec<String> = runs.iter().map(|m| format!("{:.3}", m.localization_ratio)).collect();
    let pass = runs.iter().all(|m| m.localization_ratio >= 1.5);
    outcome(
        pass,
        format!(
            "reflector / homogeneous std ratio per seed [{}] (>= 1.5)",
            ratios.join(", ")
        ),
    )
}

fn sharpening(runs: &[Manifest]) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (s, m) in runs.iter().enumerate() {
        for p in &m.probes {
            pass &= p.posterior_std < p.prior_std;
            parts.push(format!(
                "seed {s} ({}, {}): {:.3e} vs {:.3e}",
                p.x_m, p.z_m, p.posterior_std, p.prior_std
            ));
        }
    }
    outcome(pass, format!("{} (posterior < prior std)", parts.join("; ")))
}

fn determinism() -> Result<Outcome> {
    let config = ExperimentConfig::smoke();
    let a = tempdir()?;
    let b = tempdir()?;
    let ma = run_experiment_in(&config, a.path())?;
    let mb = run_experiment_in(&config, b.path())?;
    let same = !ma.checksums.is_empty() && ma.checksums == mb.checksums && ma.config_hash == mb.config_hash;
    let differing = ma
        .checksums
        .iter()
        .filter(|(k, v)| mb.checksums.get(*k) != Some(v))
        .count();
    outcome(
        same,
        format!(
            "two smoke runs: {} checksummed files, {differing} differ (== 0)",
            ma.checksums.len()
        ),
    )
}

fn report(k: usize, name: &str, started: Instant, result: Result<Outcome>) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            println!(
                "criterion {k:>2} {}: {name}: {} [{secs:.1} s]",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
            o.pass
        }
        Err(e) => {
            println!("criterion {k:>2} FAIL: {name}: error: {e} [{secs:.1} s]");
            false
        }
    }
}

fn main() {
    let wanted: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut all = true;
    type Check = fn() -> Result<Outcome>;
    let simple: [(usize, &str, Check); 6] = [
        (1, "adjoint exactness", adjoint_exactness),
        (2, "gradient correctness", gradient_correctness),
        (3, "SGLD statistical oracle", sgld_oracle),
        (4, "linearization consistency", linearization_order),
        (5, "MLE oracle", mle_oracle),
        (6, "schedule arithmetic", schedule_arithmetic),
    ];
    for (k, name, check) in simple {
        if on(k) {
            let t = Instant::now();
            all &= report(k, name, t, check());
        }
    }
    if on(7) || on(8) || on(9) {
        let t = Instant::now();
        let desk: [(usize, &str, fn(&[Manifest]) -> Result<Outcome>); 3] = [
            (7, "overfitting reduction", overfitting),
            (8, "uncertainty localization", localization),
            (9, "histogram sharpening", sharpening),
        ];
        match desk_runs() {
            Ok(runs) => {
                for (k, name, check) in desk {
                    if on(k) {
                        all &= report(k, name, t, check(&runs));
                    }
                }
            }
            Err(e) => {
                for (k, name, _) in desk {
                    if on(k) {
                        all &= report(k, name, t, Err(dip_imaging::Error::InvalidArgument(e.to_string())));
                    }
                }
            }
        }
    }
    if on(10) {
        let t = Instant::now();
        all &= report(10, "determinism", t, determinism());
    }
    println!("acceptance: {}", if all { "all criteria passed" } else { "FAILED" });
    if !all {
        std::process::exit(1);
    }
}
