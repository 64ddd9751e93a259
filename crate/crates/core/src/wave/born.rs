//! Nonlinear modeling, the linearized Born operator `J` and its adjoint.
//!
//! The scattered field obeys the same discrete recurrence as the background
//! field, driven by `f[n] = -dm * u0_tt[n]`. Here `u0_tt[n]` is the damped
//! second difference `(u[n+1] - 2 D u[n] + D^2 u[n-1]) / (D dt^2)`, which is
//! `(L u[n] + f[n]) / m` exactly, so `J` is the derivative of the discrete
//! forward map. The medium is replicated into the sponge, so a perturbation
//! of an edge cell also acts on the sponge cells that copy it.

use super::geometry::{AcquisitionGeometry, ShotRecord, SourceSignature, Wavefield};
use super::grid::Grid;
use super::model::{ModelPerturbation, SquaredSlownessModel};
use super::propagator::{PointWeights, Propagator};
use crate::autodiff::dot;
use crate::error::{Error, Result};
use crate::rng;

struct Injection {
    weights: PointWeights,
    wavelet: Vec<f64>,
}

fn source_injections(prop: &Propagator, sources: &[SourceSignature]) -> Result<Vec<Injection>> {
    sources
        .iter()
        .map(|s| {
            s.check(prop.grid())?;
            Ok(Injection {
                weights: prop.point_weights(s.location.0, s.location.1)?,
                wavelet: s.wavelet.clone(),
            })
        })
        .collect()
}

fn receiver_weights(prop: &Propagator, geom: &AcquisitionGeometry) -> Result<Vec<PointWeights>> {
    geom.validate(prop.grid())?;
    geom.receivers.iter().map(|&(x, z)| prop.point_weights(x, z)).collect()
}

fn add_point_sources(prop: &Propagator, injections: &[Injection], n: usize, next: &mut [f64]) {
    let fs = prop.force_scale();
    for inj in injections {
        let a = inj.wavelet[n];
        if a == 0.0 {
            continue;
        }
        for k in 0..4 {
            let c = inj.weights.idx[k];
            next[c] += fs[c] * inj.weights.w[k] * a;
        }
    }
}

fn record_into(receivers: &[PointWeights], u: &[f64], out: &mut [f64]) {
    for (pw, r) in receivers.iter().zip(out.iter_mut()) {
        *r = (0..4).map(|k| pw.w[k] * u[pw.idx[k]]).sum();
    }
}

fn inject_residual(receivers: &[PointWeights], samples: &[f64], ubar: &mut [f64]) {
    for (pw, &v) in receivers.iter().zip(samples) {
        for k in 0..4 {
            ubar[pw.idx[k]] += pw.w[k] * v;
        }
    }
}

/// Solves the wave equation for a (possibly simultaneous) source and records
/// the field at the receivers. Returns the record and physical-grid snapshots.
pub fn solve_forward(
    model: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
) -> Result<(ShotRecord, Wavefield)> {
    solve_forward_impl(model, sources, geom, true).map(|(r, w)| (r, w.expect("snapshots requested")))
}

/// As [`solve_forward`] but keeps only the receiver record.
pub fn solve_forward_record(
    model: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
) -> Result<ShotRecord> {
    solve_forward_impl(model, sources, geom, false).map(|(r, _)| r)
}

fn solve_forward_impl(
    model: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
    keep: bool,
) -> Result<(ShotRecord, Option<Wavefield>)> {
    let prop = Propagator::new(model)?;
    let grid = *prop.grid();
    let injections = source_injections(&prop, sources)?;
    let receivers = receiver_weights(&prop, geom)?;
    let nr = receivers.len();
    let mut record = ShotRecord::zeros(grid.nt, nr, 0);
    let mut snaps = if keep {
        vec![0.0; grid.nt * grid.cells()]
    } else {
        Vec::new()
    };
    let phys = prop.physical_indices().to_vec();
    prop.forward(
        |n, next| add_point_sources(&prop, &injections, n, next),
        |n, u| {
            record_into(&receivers, u, &mut record.traces[n * nr..(n + 1) * nr]);
            if keep {
                let plane = &mut snaps[n * phys.len()..(n + 1) * phys.len()];
                for (s, &c) in plane.iter_mut().zip(&phys) {
                    *s = u[c];
                }
            }
        },
    )?;
    let wavefield = keep.then(|| Wavefield {
        nt: grid.nt,
        nz: grid.nz,
        nx: grid.nx,
        snapshots: snaps,
        second_derivative: false,
    });
    Ok((record, wavefield))
}

/// Born modeling for one (possibly simultaneous) source, with the background
/// field's second time derivative cached on the padded grid.
pub struct BornModeler {
    prop: Propagator,
    receivers: Vec<PointWeights>,
    background: ShotRecord,
    /// `u0_tt[n]` for `n = 1 .. nt-2`, padded cells, time-major.
    u0_tt: Vec<f64>,
}

impl BornModeler {
    pub fn new(m0: &SquaredSlownessModel, sources: &[SourceSignature], geom: &AcquisitionGeometry) -> Result<Self> {
        let prop = Propagator::new(m0)?;
        let grid = *prop.grid();
        let injections = source_injections(&prop, sources)?;
        let receivers = receiver_weights(&prop, geom)?;
        let nr = receivers.len();
        let nt = grid.nt;
        let interior = prop.interior_indices().to_vec();
        let cells = interior.len();
        let inv_dt2 = 1.0 / (grid.dt * grid.dt);
        let damp: Vec<f64> = interior.iter().map(|&c| prop.damping()[c]).collect();
        let mut background = ShotRecord::zeros(nt, nr, 0);
        let mut u0_tt = vec![0.0; nt.saturating_sub(2) * cells];
        // Rolling copies of u0[n-1], u0[n] on the padded grid.
        let mut older = vec![0.0; cells];
        let mut old = vec![0.0; cells];
        prop.forward(
            |n, next| add_point_sources(&prop, &injections, n, next),
            |n, u| {
                record_into(&receivers, u, &mut background.traces[n * nr..(n + 1) * nr]);
                if n >= 2 {
                    let plane = &mut u0_tt[(n - 2) * cells..(n - 1) * cells];
                    for (k, &c) in interior.iter().enumerate() {
                        let d = damp[k];
                        plane[k] = (u[c] - 2.0 * d * old[k] + d * d * older[k]) * inv_dt2 / d;
                    }
                }
                std::mem::swap(&mut older, &mut old);
                for (k, &c) in interior.iter().enumerate() {
                    old[k] = u[c];
                }
            },
        )?;
        Ok(Self {
            prop,
            receivers,
            background,
            u0_tt,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.prop.grid()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Receiver record of the background field, `P A(m0)^-1 q`.
    pub fn background(&self) -> &ShotRecord {
        &self.background
    }

    /// Cached `u0_tt` restricted to the physical grid (levels `1 .. nt-2`).
    pub fn background_second_derivative(&self) -> Wavefield {
        let g = *self.grid();
        let (_, nxp) = g.padded();
        let padded = self.prop.interior_indices().len();
        let sw = g.sponge_width;
        let mut snapshots = Vec::with_capacity((g.nt - 2) * g.cells());
        for plane in self.u0_tt.chunks(padded) {
            for iz in 0..g.nz {
                let row = (iz + sw) * nxp + sw;
                snapshots.extend_from_slice(&plane[row..row + g.nx]);
            }
        }
        Wavefield {
            nt: g.nt - 2,
            nz: g.nz,
            nx: g.nx,
            snapshots,
            second_derivative: true,
        }
    }

    /// `J dm`.
    pub fn forward(&self, dm: &ModelPerturbation) -> Result<ShotRecord> {
        dm.check_grid(self.grid())?;
        let grid = *self.grid();
        let nr = self.receivers.len();
        let mut out = ShotRecord::zeros(grid.nt, nr, 0);
        let interior = self.prop.interior_indices();
        let ext = self.prop.extension_map();
        let cells = interior.len();
        let fs = self.prop.force_scale();
        let dmv = dm.values();
        let active: Vec<(usize, f64)> = (0..cells)
            .filter(|&p| dmv[ext[p]] != 0.0)
            .map(|p| (p, dmv[ext[p]]))
            .collect();
        self.prop.forward(
            |n, next| {
                let plane = &self.u0_tt[(n - 1) * cells..n * cells];
                for &(p, v) in &active {
                    let c = interior[p];
                    next[c] -= fs[c] * v * plane[p];
                }
            },
            |n, u| record_into(&self.receivers, u, &mut out.traces[n * nr..(n + 1) * nr]),
        )?;
        Ok(out)
    }

    /// `J^T residual`: zero-lag cross-correlation of `-u0_tt` with the
    /// time-reversed receiver-side field, folded back from the sponge.
    pub fn adjoint(&self, residual: &ShotRecord) -> Result<ModelPerturbation> {
        let grid = *self.grid();
        residual.check_dims(grid.nt, self.receivers.len())?;
        let nr = self.receivers.len();
        let interior = self.prop.interior_indices();
        let ext = self.prop.extension_map();
        let cells = interior.len();
        let fs = self.prop.force_scale();
        let mut image = vec![0.0; grid.cells()];
        self.prop.adjoint(
            |n, ubar| inject_residual(&self.receivers, &residual.traces[n * nr..(n + 1) * nr], ubar),
            |n, abar| {
                let plane = &self.u0_tt[(n - 1) * cells..n * cells];
                for (p, &c) in interior.iter().enumerate() {
                    image[ext[p]] -= plane[p] * fs[c] * abar[c];
                }
            },
        )?;
        ModelPerturbation::new(grid, image)
    }
}

/// `J(m0, q) dm` for a single call; see [`BornModeler`] for repeated use.
pub fn born_forward(
    m0: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
    dm: &ModelPerturbation,
) -> Result<ShotRecord> {
    BornModeler::new(m0, sources, geom)?.forward(dm)
}

/// `J(m0, q)^T residual` for a single call.
pub fn born_adjoint(
    m0: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
    residual: &ShotRecord,
) -> Result<ModelPerturbation> {
    BornModeler::new(m0, sources, geom)?.adjoint(residual)
}

/// Max over `trials` random pairs `(x, y)` of
/// `|<J x, y> - <x, J^T y>| / (||J x|| ||y||)`.
pub fn dot_product_test(
    m0: &SquaredSlownessModel,
    sources: &[SourceSignature],
    geom: &AcquisitionGeometry,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "dot-product test needs at least one trial".into(),
        ));
    }
    let modeler = BornModeler::new(m0, sources, geom)?;
    let grid = *m0.grid();
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut r = rng::split(seed, rng::stream::DOT_TEST, t as u64);
        let x = ModelPerturbation::new(grid, rng::standard_normal_vec(&mut r, grid.cells()))?;
        let y = ShotRecord::new(
            grid.nt,
            modeler.n_receivers(),
            rng::standard_normal_vec(&mut r, grid.nt * modeler.n_receivers()),
            0,
        )?;
        worst = worst.max(adjoint_mismatch(&modeler, &x, &y)?);
    }
    Ok(worst)
}

/// `|<J x, y> - <x, J^T y>| / (||J x|| ||y||)` for one pair.
pub fn adjoint_mismatch(modeler: &BornModeler, x: &ModelPerturbation, y: &ShotRecord) -> Result<f64> {
    let jx = modeler.forward(x)?;
    let jty = modeler.adjoint(y)?;
    let lhs = jx.dot(y);
    let rhs = dot(x.values(), jty.values());
    let scale = jx.norm_sq().sqrt() * y.norm_sq().sqrt();
    Ok((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE))
}
