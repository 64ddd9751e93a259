use std::fs;

use dip_imaging::harness::*;
use dip_imaging::inference::Dataset;
use dip_imaging::rng;
use dip_imaging::wave::*;
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn small_grid(nz: usize, nx: usize) -> Grid {
    let dt = Grid::stable_dt(25.0, 25.0, 2900.0, 0.9);
    Grid::new(nz, nx, 25.0, 25.0, 130, dt)
        .unwrap()
        .with_sponge(10, 0.014)
        .unwrap()
}

fn small_toy(grid: &Grid) -> ToyModel {
    let mut spec = default_toy_spec(grid);
    spec.smoothing_cells = 3.0;
    make_toy_model(&spec, grid).unwrap()
}

fn acquisition(ns: usize, nr: usize) -> AcquisitionSpec {
    AcquisitionSpec {
        n_sources: ns,
        n_receivers: nr,
        source_depth_m: 20.0,
        receiver_depth_m: 20.0,
        f0: 10.0,
        t0: 0.1,
    }
}

fn simulate(grid: &Grid, toy: &ToyModel, ns: usize, variance: f64, seed: u64, linear: bool) -> SimulatedData {
    let (rec, src) = acquisition(ns, grid.nx).build(grid).unwrap();
    let src: Vec<_> = src.iter().map(|s| s.scaled(1e5)).collect();
    simulate_data(toy, &rec, &src, variance, seed, linear).unwrap()
}

#[test]
fn zero_fault_offset_gives_identical_columns() {
    let grid = small_grid(20, 24);
    let mut spec = default_toy_spec(&grid);
    spec.fault_offset_m = 0.0;
    let toy = make_toy_model(&spec, &grid).unwrap();
    let dm = toy.dm.values();
    for iz in 0..grid.nz {
        let row = &dm[iz * grid.nx..(iz + 1) * grid.nx];
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        assert!(row.iter().all(|v| (v - row[0]).abs() <= 1e-12 * scale), "row {iz}");
    }
    let faulted = small_toy(&grid);
    assert!(faulted.dm.values().iter().zip(dm).any(|(a, b)| a != b));
}

#[test]
fn toy_perturbation_keeps_model_positive() {
    let grid = small_grid(20, 24);
    let toy = small_toy(&grid);
    for (m0, dm) in toy.m0.values().iter().zip(toy.dm.values()) {
        assert!(m0 + dm > 0.0);
    }
    let mut bad = default_toy_spec(&grid);
    bad.velocities = vec![2000.0];
    bad.interface_depths_m.clear();
    assert!(make_toy_model(&bad, &grid).is_err());
}

#[test]
fn huge_smoothing_removes_the_mean() {
    let grid = small_grid(20, 24);
    let mut spec = default_toy_spec(&grid);
    spec.smoothing_cells = 1e4;
    let toy = make_toy_model(&spec, &grid).unwrap();
    let n = grid.cells() as f64;
    let mean_true = toy.m_true.values().iter().sum::<f64>() / n;
    let dm_mean = toy.dm.values().iter().sum::<f64>() / n;
    assert!(dm_mean.abs() <= 1e-12 * mean_true, "{dm_mean}");
    let spread = toy
        .m0
        .values()
        .iter()
        .map(|v| (v - mean_true).abs())
        .fold(0.0, f64::max);
    assert!(spread <= 1e-6 * mean_true, "{spread}");
}

/// Energy of the mean-removed background above `1 / (2 s)` cycles per cell,
/// from the 2D FFT of its mirror extension.
fn high_band_fraction(m0: &[f64], nz: usize, nx: usize, s: f64) -> f64 {
    let mean = m0.iter().sum::<f64>() / m0.len() as f64;
    let (h, w) = (2 * nz, 2 * nx);
    let mut buf: Vec<Complex<f64>> = (0..h * w)
        .map(|c| {
            let (y, x) = (c / w, c % w);
            let sy = if y < nz { y } else { h - 1 - y };
            let sx = if x < nx { x } else { w - 1 - x };
            Complex::new(m0[sy * nx + sx] - mean, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let row = planner.plan_fft_forward(w);
    for r in buf.chunks_mut(w) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(h);
    let mut tmp = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
    let freq = |i: usize, n: usize| {
        let f = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        f / n as f64
    };
    let cutoff = 1.0 / (2.0 * s);
    let (mut hi, mut total) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let e = buf[y * w + x].norm_sqr();
            total += e;
            if freq(y, h).hypot(freq(x, w)) > cutoff {
                hi += e;
            }
        }
    }
    hi / total
}

#[test]
fn background_has_no_energy_above_the_cutoff() {
    let grid = small_grid(40, 64);
    for s in [3.0, 4.0, 10.0] {
        let mut spec = default_toy_spec(&grid);
        spec.smoothing_cells = s;
        let toy = make_toy_model(&spec, &grid).unwrap();
        let f = high_band_fraction(toy.m0.values(), grid.nz, grid.nx, s);
        assert!(f < 0.01, "smoothing {s}: high-band fraction {f}");
        let raw = high_band_fraction(toy.m_true.values(), grid.nz, grid.nx, s);
        assert!(raw > f, "the true model should carry more high-band energy");
    }
}

#[test]
fn noise_variance_is_within_two_percent() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 3, 2.0, 11, false);
    let all: Vec<f64> = sim.noise.iter().flat_map(|r| r.traces.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    assert!((var / 2.0 - 1.0).abs() < 0.02, "sample variance {var}");
    for (e, (c, n)) in sim.dataset.experiments().iter().zip(sim.clean.iter().zip(&sim.noise)) {
        let mut want = c.clone();
        want.axpy(1.0, n);
        assert_eq!(e.observed, want);
    }
}

#[test]
fn noise_free_unperturbed_data_equal_the_background() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let flat = ToyModel {
        velocity: toy.m0.values().iter().map(|m| velocity(*m)).collect(),
        m_true: toy.m0.clone(),
        m0: toy.m0.clone(),
        dm: ModelPerturbation::zeros(grid),
    };
    let sim = simulate(&grid, &flat, 2, 0.0, 0, false);
    for (e, b) in sim.dataset.experiments().iter().zip(&sim.background) {
        assert_eq!(&e.observed, b);
    }
    assert!(sim.noise.iter().all(|n| n.traces.iter().all(|v| *v == 0.0)) || sim.noise_variance == 0.0);
}

#[test]
fn simulation_is_seeded() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let a = simulate(&grid, &toy, 2, 1.0, 5, false);
    let b = simulate(&grid, &toy, 2, 1.0, 5, false);
    let c = simulate(&grid, &toy, 2, 1.0, 6, false);
    assert_eq!(a.noise, b.noise);
    assert_ne!(a.noise, c.noise);
}

#[test]
fn identity_encoding_returns_the_shots() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 3, 1.0, 0, false);
    let (enc, w) = encode_simultaneous(&sim.dataset, 3, 0, true).unwrap();
    assert_eq!(enc.sigma2(), sim.dataset.sigma2());
    for (j, (a, b)) in enc.experiments().iter().zip(sim.dataset.experiments()).enumerate() {
        assert_eq!(a.observed.traces, b.observed.traces);
        assert_eq!(
            a.sources.iter().filter(|s| s.wavelet.iter().any(|v| *v != 0.0)).count(),
            1
        );
        assert_eq!(w[j][j], 1.0);
    }
    assert!(encode_simultaneous(&sim.dataset, 2, 0, true).is_err());
    assert!(encode_simultaneous(&sim.dataset, 0, 0, false).is_err());
}

#[test]
fn random_encoding_scales_the_noise_variance() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 3, 1.0, 0, false);
    let (enc, w) = encode_simultaneous(&sim.dataset, 5, 9, false).unwrap();
    assert_eq!(enc.n(), 5);
    assert_eq!(w.len(), 5);
    assert_eq!(enc.sigma2(), sim.dataset.sigma2() * encoded_noise_factor(3));
    let (again, _) = encode_simultaneous(&sim.dataset, 5, 9, false).unwrap();
    assert_eq!(enc.experiments()[4].observed, again.experiments()[4].observed);
}

fn with_observed(base: &Dataset, observed: Vec<ShotRecord>) -> Dataset {
    let exps = base
        .experiments()
        .iter()
        .zip(observed)
        .map(|(e, o)| dip_imaging::inference::Experiment {
            observed: o,
            sources: e.sources.clone(),
        })
        .collect();
    Dataset::new(base.m0().clone(), base.receivers().to_vec(), exps, base.sigma2()).unwrap()
}

#[test]
fn encoded_gradient_is_unbiased() {
    let grid = small_grid(10, 12);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 3, 1.0, 2, false);
    let seq = &sim.dataset;
    let mut r = rng::seeded(77, 1);
    let dm = ModelPerturbation::new(
        grid,
        rng::standard_normal_vec(&mut r, grid.cells())
            .iter()
            .map(|v| 1e-3 * v)
            .collect(),
    )
    .unwrap();
    // Sequential gradient sum_i J_i^T (J_i dm - dd_i).
    let mut exact = vec![0.0; grid.cells()];
    for i in 0..seq.n() {
        let m = seq.modeler(i).unwrap();
        let res = m.forward(&dm).unwrap().minus(seq.residual(i).unwrap()).unwrap();
        for (g, v) in exact.iter_mut().zip(m.adjoint(&res).unwrap().values()) {
            *g += v;
        }
    }
    let dirs = [
        exact.clone(),
        rng::standard_normal_vec(&mut r, grid.cells()),
        rng::standard_normal_vec(&mut r, grid.cells()),
    ];
    let draws = 2000;
    let mut proj = vec![Vec::with_capacity(draws); dirs.len()];
    let mut er = rng::seeded(5, rng::stream::ENCODING);
    for _ in 0..draws {
        let e = rng::standard_normal_vec(&mut er, seq.n());
        let enc = encode_with_weights(seq, &[e], 1.0).unwrap();
        let m = enc.modeler(0).unwrap();
        let res = m.forward(&dm).unwrap().minus(enc.residual(0).unwrap()).unwrap();
        let g = m.adjoint(&res).unwrap();
        for (p, d) in proj.iter_mut().zip(&dirs) {
            p.push(g.values().iter().zip(d).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    for (k, (p, d)) in proj.iter().zip(&dirs).enumerate() {
        let n = p.len() as f64;
        let mean = p.iter().sum::<f64>() / n;
        let sd = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let want: f64 = exact.iter().zip(d).map(|(a, b)| a * b).sum();
        let z = (mean - want) / (sd / n.sqrt());
        assert!(
            z.abs() <= 3.0,
            "direction {k}: mean {mean:.6e} vs {want:.6e}, z = {z:.2}"
        );
    }
}

#[test]
fn linear_data_sigma2_is_the_measurement_variance() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 2, 2.0, 0, true);
    let s2 = estimate_sigma2(&sim, 2.0).unwrap();
    assert!((s2 - 2.0).abs() <= 1e-12, "{s2}");
}

#[test]
fn sigma2_matches_recomputation_from_stored_arrays() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let sim = simulate(&grid, &toy, 2, 2.0, 0, false);
    let dir = tempfile::tempdir().unwrap();
    let flat = |rs: &[ShotRecord]| -> Vec<f64> { rs.iter().flat_map(|r| r.traces.iter().copied()).collect() };
    let n = sim.clean.len() * sim.clean[0].len();
    for (name, rs) in [
        ("clean", &sim.clean),
        ("background", &sim.background),
        ("born", &sim.born),
    ] {
        write_array(&dir.path().join(name), &flat(rs), &[n], "pressure", None, &[]).unwrap();
    }
    let load = |name: &str| read_array(&dir.path().join(name)).unwrap().0;
    let (c, b, j) = (load("clean"), load("background"), load("born"));
    let e: Vec<f64> = (0..n).map(|k| c[k] - b[k] - j[k]).collect();
    let mean = e.iter().sum::<f64>() / n as f64;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let s2 = estimate_sigma2(&sim, 2.0).unwrap();
    assert!(var > 0.0);
    assert!((s2 - (2.0 + var)).abs() <= 1e-12 * s2, "{s2} vs {}", 2.0 + var);
}

#[test]
fn amplitude_calibration_hits_the_target_snr() {
    let grid = small_grid(12, 16);
    let toy = small_toy(&grid);
    let (rec, src) = acquisition(3, 16).build(&grid).unwrap();
    let a = calibrate_amplitude(&toy, &rec, &src, 2.0, -10.0, true).unwrap();
    let src: Vec<_> = src.iter().map(|s| s.scaled(a)).collect();
    let sim = simulate_data(&toy, &rec, &src, 2.0, 3, true).unwrap();
    let snr = sim.snr_db().unwrap();
    assert!((snr + 10.0).abs() < 0.2, "{snr}");
}

#[test]
fn known_payload_checksum_matches_sha256sum() {
    // `python3 -c "import struct,sys; sys.stdout.buffer.write(struct.pack('<4d', 1.0, -2.5, 0.125, 1e300))" | sha256sum`
    let want = "d36bdb90ecb7a1f6875160580fce0e374cc51d907b371b297e8dd1bb682a8431";
    let values = [1.0, -2.5, 0.125, 1e300];
    assert_eq!(sha256_f64(&values), want);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("four.f64");
    assert_eq!(write_array(&p, &values, &[4], "1", None, &[]).unwrap(), want);
    assert_eq!(sha256_hex(&fs::read(&p).unwrap()), want);
    let (_, h) = read_array(&p).unwrap();
    assert_eq!(h.sha256, want);
}

#[test]
fn header_shape_mismatch_is_a_read_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.f64");
    write_array(&p, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3], "1", None, &[]).unwrap();
    let hp = header_path(&p);
    let text = fs::read_to_string(&hp).unwrap().replace("shape = 2 3", "shape = 2 4");
    fs::write(&hp, text).unwrap();
    assert!(read_array(&p).is_err());
}

#[test]
fn pgm_has_the_right_size_and_symmetric_scale() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pgm");
    write_pgm(&p, &[-1.0, 0.0, 1.0, 5.0, -5.0, 0.5], 2, 3, 1.0).unwrap();
    let bytes = fs::read(&p).unwrap();
    let header = b"P5\n3 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let px = &bytes[header.len()..];
    assert_eq!(px.len(), 6);
    assert_eq!(px[0], 0);
    assert_eq!(px[2], 255);
    assert_eq!(px[3], 255);
    assert_eq!(px[4], 0);
    assert!((px[1] as i32 - 128).abs() <= 1);
}

#[test]
fn smoke_pipeline_emits_every_artifact_class() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment_in(&ExperimentConfig::smoke(), dir.path()).unwrap();
    for ext in ["f64", "hdr", "pgm", "csv"] {
        assert!(m.checksums.keys().any(|k| k.ends_with(ext)), "no .{ext} output");
    }
    for f in [
        "manifest.json",
        "config.toml",
        "sgld_diagnostics.csv",
        "mle_trace.csv",
        "map_trace.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(!m.checksums.contains_key("sgld_diagnostics.csv"));
    assert_eq!(m.ensemble_size, 10);
    assert_eq!(m.probes.len(), 2);
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(text.contains(&m.config_hash));
    let hdr = fs::read_to_string(dir.path().join("bma.f64.hdr")).unwrap();
    assert!(hdr.contains(&format!("config_hash = {}", m.config_hash)));
    let config = ExperimentConfig::from_toml(&fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap();
    assert_eq!(config.hash(), m.config_hash);
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::smoke();
    c.sgld.epsilon = 1e3;
    let e = run_experiment_in(&c, dir.path()).unwrap_err().to_string();
    assert!(e.contains("`sgld`"), "{e}");
    assert!(dir.path().join("mle.f64").exists(), "partial outputs should be kept");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn array_round_trip_is_bit_exact(values in prop::collection::vec(prop::num::f64::ANY, 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        write_array(&p, &values, &[values.len()], "1", None, &[]).unwrap();
        let (back, h) = read_array(&p).unwrap();
        prop_assert_eq!(h.shape, vec![values.len()]);
        prop_assert!(back.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn encoding_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let grid = Grid::new(6, 8, 25.0, 25.0, 40, 3e-3).unwrap().with_sponge(4, 0.03).unwrap();
        let m0 = SquaredSlownessModel::homogeneous(grid, 2000.0).unwrap();
        let wavelet = ricker_wavelet(10.0, &grid, 0.1).unwrap();
        let rec = AcquisitionGeometry::line(8, 0.0, grid.width_m(), 20.0);
        let exps: Vec<_> = (0..3)
            .map(|i| dip_imaging::inference::Experiment {
                observed: ShotRecord::zeros(grid.nt, 8, i),
                sources: vec![SourceSignature::new(wavelet.clone(), (50.0 * (i + 1) as f64, 20.0))],
            })
            .collect();
        let base = Dataset::new(m0, rec, exps, 1.0).unwrap();
        let mut r = rng::seeded(seed, 3);
        let rand_records = |r: &mut rng::Rng| -> Vec<ShotRecord> {
            (0..3).map(|i| ShotRecord::new(grid.nt, 8, rng::standard_normal_vec(r, grid.nt * 8), i).unwrap()).collect()
        };
        let d1 = rand_records(&mut r);
        let d2 = rand_records(&mut r);
        let sum: Vec<ShotRecord> = d1.iter().zip(&d2).map(|(x, y)| { let mut s = x.scaled(a); s.axpy(1.0, y); s }).collect();
        let w: Vec<Vec<f64>> = (0..4).map(|_| rng::standard_normal_vec(&mut r, 3)).collect();
        let e1 = encode_with_weights(&with_observed(&base, d1), &w, 1.0).unwrap();
        let e2 = encode_with_weights(&with_observed(&base, d2), &w, 1.0).unwrap();
        let es = encode_with_weights(&with_observed(&base, sum), &w, 1.0).unwrap();
        for j in 0..4 {
            let mut want = e1.experiments()[j].observed.scaled(a);
            want.axpy(1.0, &e2.experiments()[j].observed);
            let got = &es.experiments()[j].observed;
            let scale = want.norm_sq().sqrt().max(1e-300);
            let diff = got.minus(&want).unwrap().norm_sq().sqrt();
            prop_assert!(diff <= 1e-12 * scale, "encoding {}: {}", j, diff / scale);
        }
    }
}
