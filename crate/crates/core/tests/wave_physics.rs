use std::f64::consts::PI;

use dip_imaging::rng;
use dip_imaging::wave::*;

fn small_setup(
    nz: usize,
    nx: usize,
    dx: f64,
    nt: usize,
    dt: f64,
    sponge: usize,
) -> (SquaredSlownessModel, AcquisitionGeometry) {
    let grid = Grid::new(nz, nx, dx, dx, nt, dt)
        .unwrap()
        .with_sponge(sponge, 0.02)
        .unwrap();
    // Smoothly varying background, 1800 -> 2600 m/s with depth.
    let mut vel = Vec::with_capacity(grid.cells());
    for iz in 0..nz {
        for ix in 0..nx {
            vel.push(1800.0 + 800.0 * iz as f64 / nz as f64 + 30.0 * (ix as f64 * 0.2).sin());
        }
    }
    let m0 = SquaredSlownessModel::from_velocity(grid, &vel).unwrap();
    let wavelet = ricker_wavelet(15.0, &grid, 1.0 / 15.0).unwrap();
    let src = SourceSignature::new(wavelet, (grid.width_m() * 0.37, 2.0 * dx + 3.0));
    let receivers = AcquisitionGeometry::line(nx / 2, 0.0, grid.width_m(), 2.5 * dx);
    (m0, AcquisitionGeometry::new(receivers, vec![src]))
}

fn random_dm(grid: &Grid, seed: u64, amp: f64) -> ModelPerturbation {
    let mut r = rng::seeded(seed, 100);
    ModelPerturbation::new(
        *grid,
        rng::standard_normal_vec(&mut r, grid.cells())
            .into_iter()
            .map(|v| v * amp)
            .collect(),
    )
    .unwrap()
}

#[test]
fn zero_wavelet_gives_zero_record_and_field() {
    let (m0, geom) = small_setup(20, 24, 10.0, 120, 1e-3, 8);
    let src = SourceSignature::new(vec![0.0; 120], geom.sources[0].location);
    let (rec, wf) = solve_forward(&m0, &[src], &geom).unwrap();
    assert!(rec.traces.iter().all(|&v| v == 0.0));
    assert!(wf.snapshots.iter().all(|&v| v == 0.0));
    assert!(wf.snapshot(0).iter().all(|&v| v == 0.0));
}

#[test]
fn record_is_linear_in_source() {
    let (m0, geom) = small_setup(20, 24, 10.0, 150, 1e-3, 8);
    let src = geom.sources[0].clone();
    let r1 = solve_forward_record(&m0, &[src.clone()], &geom).unwrap();
    let r2 = solve_forward_record(&m0, &[src.scaled(2.0)], &geom).unwrap();
    let scale = r1.norm_sq().sqrt();
    assert!(scale > 0.0);
    for (a, b) in r1.traces.iter().zip(&r2.traces) {
        assert!((2.0 * a - b).abs() <= 1e-13 * scale);
    }
}

#[test]
fn born_of_zero_is_zero_and_adjoint_of_zero_is_zero() {
    let (m0, geom) = small_setup(16, 20, 10.0, 100, 1e-3, 6);
    let grid = *m0.grid();
    let modeler = BornModeler::new(&m0, &geom.sources, &geom).unwrap();
    let rec = modeler.forward(&ModelPerturbation::zeros(grid)).unwrap();
    assert!(rec.traces.iter().all(|&v| v == 0.0));
    let img = modeler
        .adjoint(&ShotRecord::zeros(grid.nt, geom.n_receivers(), 0))
        .unwrap();
    assert!(img.values().iter().all(|&v| v == 0.0));
}

#[test]
fn born_pair_is_linear() {
    let (m0, geom) = small_setup(16, 20, 10.0, 120, 1e-3, 6);
    let grid = *m0.grid();
    let modeler = BornModeler::new(&m0, &geom.sources, &geom).unwrap();
    let dm = random_dm(&grid, 1, 0.01);
    let alpha = -1.7318;
    let a = modeler.forward(&dm).unwrap();
    let scaled = ModelPerturbation::new(grid, dm.values().iter().map(|v| alpha * v).collect()).unwrap();
    let b = modeler.forward(&scaled).unwrap();
    let err = a.scaled(alpha).minus(&b).unwrap().norm_sq().sqrt() / b.norm_sq().sqrt();
    assert!(err <= 1e-12, "forward linearity {err}");

    let mut r = rng::seeded(5, 1);
    let nr = geom.n_receivers();
    let y1 = ShotRecord::new(grid.nt, nr, rng::standard_normal_vec(&mut r, grid.nt * nr), 0).unwrap();
    let y2 = ShotRecord::new(grid.nt, nr, rng::standard_normal_vec(&mut r, grid.nt * nr), 0).unwrap();
    let mut y12 = y1.clone();
    y12.axpy(1.0, &y2);
    let i1 = modeler.adjoint(&y1).unwrap();
    let i2 = modeler.adjoint(&y2).unwrap();
    let i12 = modeler.adjoint(&y12).unwrap();
    let diff: f64 = i1
        .values()
        .iter()
        .zip(i2.values())
        .zip(i12.values())
        .map(|((a, b), c)| (a + b - c).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(diff <= 1e-12 * i12.norm(), "adjoint additivity {}", diff / i12.norm());
}

#[test]
fn dot_product_test_passes_and_is_deterministic() {
    let (m0, geom) = small_setup(18, 22, 10.0, 140, 1e-3, 6);
    let a = dot_product_test(&m0, &geom.sources, &geom, 5, 42).unwrap();
    let b = dot_product_test(&m0, &geom.sources, &geom, 5, 42).unwrap();
    assert!(a <= 1e-10, "dot-product discrepancy {a}");
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(dot_product_test(&m0, &geom.sources, &geom, 0, 42).is_err());
}

#[test]
fn single_trial_equals_manual_check() {
    let (m0, geom) = small_setup(14, 16, 10.0, 100, 1e-3, 5);
    let grid = *m0.grid();
    let auto = dot_product_test(&m0, &geom.sources, &geom, 1, 9).unwrap();
    let modeler = BornModeler::new(&m0, &geom.sources, &geom).unwrap();
    let mut r = rng::split(9, rng::stream::DOT_TEST, 0);
    let x = ModelPerturbation::new(grid, rng::standard_normal_vec(&mut r, grid.cells())).unwrap();
    let nr = geom.n_receivers();
    let y = ShotRecord::new(grid.nt, nr, rng::standard_normal_vec(&mut r, grid.nt * nr), 0).unwrap();
    let jx = modeler.forward(&x).unwrap();
    let jty = modeler.adjoint(&y).unwrap();
    let manual = (jx.dot(&y) - x.values().iter().zip(jty.values()).map(|(a, b)| a * b).sum::<f64>()).abs()
        / (jx.norm_sq().sqrt() * y.norm_sq().sqrt());
    assert_eq!(auto.to_bits(), manual.to_bits());
}

#[test]
fn linearization_converges_first_order() {
    let (m0, geom) = small_setup(20, 24, 10.0, 160, 1e-3, 6);
    let grid = *m0.grid();
    // Smooth-ish perturbation, ~5% of the background.
    let dm = ModelPerturbation::new(
        grid,
        (0..grid.cells())
            .map(|k| {
                let (iz, ix) = (k / grid.nx, k % grid.nx);
                0.02 * ((iz as f64 * 0.5).sin() + (ix as f64 * 0.3).cos())
            })
            .collect(),
    )
    .unwrap();
    let base = solve_forward_record(&m0, &geom.sources, &geom).unwrap();
    let born = born_forward(&m0, &geom.sources, &geom, &dm).unwrap();
    let hs = [1e-2, 1e-3, 1e-4];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let pert = solve_forward_record(&m0.perturbed(&dm, h).unwrap(), &geom.sources, &geom).unwrap();
            let fd = pert.minus(&base).unwrap().scaled(1.0 / h);
            fd.minus(&born).unwrap().norm_sq().sqrt() / born.norm_sq().sqrt()
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!(order >= 0.9, "observed order {order}, errors {errs:?}");
    }
}

/// 2D Green's function response to a Ricker, `(1/2pi) int_0^inf r(t - T cosh s) ds`
/// (for unit `c`, up to a constant factor).
fn analytic_2d_trace(f0: f64, t0: f64, travel: f64, times: &[f64]) -> Vec<f64> {
    let ds: f64 = 1e-3;
    times
        .iter()
        .map(|&t| {
            let mut acc = 0.0;
            let mut s = 0.5 * ds;
            loop {
                let tau = travel * s.cosh();
                if tau > t + 1.0 {
                    break;
                }
                let a = (PI * f0 * (t - tau - t0)).powi(2);
                acc += (1.0 - 2.0 * a) * (-a).exp() * ds;
                s += ds;
            }
            acc
        })
        .collect()
}

#[test]
fn homogeneous_first_break_matches_travel_time() {
    let dx = 10.0;
    let dt = 1e-3;
    let (f0, t0) = (8.0, 0.25);
    let grid = Grid::new(40, 80, dx, dx, 700, dt)
        .unwrap()
        .with_sponge(40, 0.0035)
        .unwrap();
    let m = SquaredSlownessModel::homogeneous(grid, 2000.0).unwrap();
    let src = SourceSignature::new(ricker_wavelet(f0, &grid, t0).unwrap(), (190.0, 200.0));
    let geom = AcquisitionGeometry::new(vec![(590.0, 200.0)], vec![src]);
    let rec = solve_forward_record(&m, &geom.sources, &geom).unwrap();
    let trace = rec.trace(0);
    let times: Vec<f64> = grid.times().collect();
    let template = analytic_2d_trace(f0, t0, 0.2, &times);
    // Lag of best normalized correlation between the numerical and analytic traces.
    let corr = |lag: isize| -> f64 {
        let mut acc = 0.0;
        for n in 0..grid.nt as isize {
            let m = n + lag;
            if m >= 0 && (m as usize) < grid.nt {
                acc += trace[m as usize] * template[n as usize];
            }
        }
        acc
    };
    let (best, _) = (-40isize..=40)
        .map(|l| (l, corr(l)))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let first_break = 0.2 + t0 + best as f64 * dt;
    assert!((first_break - (0.2 + t0)).abs() <= 2.0 * dt, "lag {best} samples");
}

#[test]
fn sponge_drains_energy_at_late_times() {
    let dx = 10.0;
    let dt = 1e-3;
    let f0 = 12.0;
    let t0 = 1.0 / f0;
    let grid = Grid::new(40, 40, dx, dx, 2400, dt).unwrap();
    assert_eq!(
        (grid.sponge_width, grid.sponge_damping),
        (DEFAULT_SPONGE_WIDTH, DEFAULT_SPONGE_DAMPING)
    );
    let m = SquaredSlownessModel::homogeneous(grid, 2000.0).unwrap();
    let mut wavelet = ricker_wavelet(f0, &grid, t0).unwrap();
    for (n, w) in wavelet.iter_mut().enumerate() {
        if n as f64 * dt > t0 + 3.0 / f0 {
            *w = 0.0;
        }
    }
    let src = SourceSignature::new(wavelet, (200.0, 200.0));
    let geom = AcquisitionGeometry::new(vec![(100.0, 100.0)], vec![src]);
    let (_, wf) = solve_forward(&m, &geom.sources, &geom).unwrap();
    // Amplitude is measured per window of one domain crossing (400 m at 2 km/s).
    let block = 200;
    let start = 3 * grid.nt / 4;
    let maxes: Vec<f64> = (start..grid.nt)
        .step_by(block)
        .map(|b| {
            (b..b + block)
                .flat_map(|n| wf.snapshot(n).iter().map(|v| v.abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    assert_eq!(maxes.len(), 3);
    for w in maxes.windows(2) {
        assert!(w[1] <= w[0], "max amplitude increased: {maxes:?}");
    }
    let peak = wf.snapshots.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(maxes[2] < 0.05 * peak, "late-time field {} vs peak {peak}", maxes[2]);
}

#[test]
fn propagation_is_bit_deterministic() {
    let (m0, geom) = small_setup(16, 20, 10.0, 100, 1e-3, 6);
    let a = solve_forward_record(&m0, &geom.sources, &geom).unwrap();
    let b = solve_forward_record(&m0, &geom.sources, &geom).unwrap();
    assert!(a.traces.iter().zip(&b.traces).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn ricker_matches_formula_pointwise() {
    let grid = Grid::new(4, 4, 10.0, 10.0, 1000, 1e-3).unwrap();
    let w = ricker_wavelet(8.0, &grid, 0.25).unwrap();
    for (n, &v) in w.iter().enumerate() {
        let t = n as f64 * 1e-3 - 0.25;
        let a = PI * PI * 64.0 * t * t;
        let expected = (1.0 - 2.0 * a) * (-a).exp();
        assert!((v - expected).abs() <= 1e-15);
    }
    assert_eq!(w[250], 1.0);
}

#[test]
fn cfl_violation_is_reported() {
    let grid = Grid::new(10, 10, 10.0, 10.0, 50, 4e-3).unwrap();
    let m = SquaredSlownessModel::homogeneous(grid, 3000.0).unwrap();
    let geom = AcquisitionGeometry::new(
        vec![(10.0, 10.0)],
        vec![SourceSignature::new(vec![0.0; 50], (20.0, 20.0))],
    );
    assert!(matches!(
        solve_forward_record(&m, &geom.sources, &geom),
        Err(dip_imaging::Error::Cfl { .. })
    ));
}
