//! Explicit leapfrog solver for `m u_tt - lap(u) = f` with a Cerjan sponge.
//!
//! One step, with `D` the sponge damping and `S = dt^2 / m` (both diagonal)
//! and `L` the fourth-order Laplacian with zero Dirichlet values beyond the
//! padded grid:
//!
//! ```text
//! u[n+1] = D (2 u[n] - D u[n-1] + S (L u[n] + f[n])),   n = 1 .. nt-2
//! ```
//!
//! with `u[0] = u[1] = 0`. The recurrence is linear in `f`, so its exact
//! transpose runs the same stencil backwards in time (see [`Propagator::adjoint`]).

use super::grid::Grid;
use super::model::SquaredSlownessModel;
use crate::error::{Error, Result};

const HALO: usize = 2;
const C0: f64 = -5.0 / 2.0;
const C1: f64 = 4.0 / 3.0;
const C2: f64 = -1.0 / 12.0;

/// Bilinear interpolation weights of a point onto the four surrounding nodes,
/// as indices into the padded field.
#[derive(Clone, Copy, Debug)]
pub struct PointWeights {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct Propagator {
    grid: Grid,
    nzp: usize,
    nxp: usize,
    stride: usize,
    /// Damping `D` per field cell.
    damp: Vec<f64>,
    /// `D * D`.
    damp2: Vec<f64>,
    /// `dt^2 / m`.
    step_scale: Vec<f64>,
    /// `D * dt^2 / m`, the injection weight of a forcing term.
    force_scale: Vec<f64>,
    inv_dx2: f64,
    inv_dz2: f64,
    /// Padded-field index of every physical cell, row-major over `(iz, ix)`.
    physical: Vec<usize>,
    /// Field index of every padded (sponge-inclusive) cell, row-major.
    interior: Vec<usize>,
    /// Physical cell whose value each padded cell replicates.
    extension: Vec<usize>,
}

impl Propagator {
    pub fn new(model: &SquaredSlownessModel) -> Result<Self> {
        let grid = *model.grid();
        grid.validate()?;
        grid.check_cfl(model.max_velocity())?;
        let sw = grid.sponge_width;
        let (nzp, nxp) = grid.padded();
        let stride = nxp + 2 * HALO;
        let total = (nzp + 2 * HALO) * stride;
        // Halo cells are never updated; unit damping keeps the field algebra uniform.
        let mut damp = vec![1.0; total];
        let mut step_scale = vec![0.0; total];
        let dt2 = grid.dt * grid.dt;
        let m = model.values();
        for pz in 0..nzp {
            let iz = pz.saturating_sub(sw).min(grid.nz - 1);
            let jz = sponge_depth(pz, sw, grid.nz);
            for px in 0..nxp {
                let ix = px.saturating_sub(sw).min(grid.nx - 1);
                let jx = sponge_depth(px, sw, grid.nx);
                let c = (pz + HALO) * stride + px + HALO;
                let a = grid.sponge_damping;
                damp[c] = (-(a * a) * (jz * jz + jx * jx) as f64).exp();
                step_scale[c] = dt2 / m[iz * grid.nx + ix];
            }
        }
        let damp2 = damp.iter().map(|d| d * d).collect();
        let force_scale = damp.iter().zip(&step_scale).map(|(d, s)| d * s).collect();
        let mut interior = Vec::with_capacity(nzp * nxp);
        let mut extension = Vec::with_capacity(nzp * nxp);
        for pz in 0..nzp {
            let iz = pz.saturating_sub(sw).min(grid.nz - 1);
            for px in 0..nxp {
                let ix = px.saturating_sub(sw).min(grid.nx - 1);
                interior.push((pz + HALO) * stride + px + HALO);
                extension.push(iz * grid.nx + ix);
            }
        }
        let mut physical = Vec::with_capacity(grid.cells());
        for iz in 0..grid.nz {
            for ix in 0..grid.nx {
                physical.push((iz + sw + HALO) * stride + ix + sw + HALO);
            }
        }
        let dx_km = grid.dx / 1000.0;
        let dz_km = grid.dz / 1000.0;
        Ok(Self {
            grid,
            nzp,
            nxp,
            stride,
            damp,
            damp2,
            step_scale,
            force_scale,
            inv_dx2: 1.0 / (dx_km * dx_km),
            inv_dz2: 1.0 / (dz_km * dz_km),
            physical,
            interior,
            extension,
        })
    }

    /// Field indices of all padded cells (sponge included, halo excluded).
    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    /// For each entry of [`Self::interior_indices`], the physical cell whose
    /// medium value it replicates.
    pub fn extension_map(&self) -> &[usize] {
        &self.extension
    }

    pub fn damping(&self) -> &[f64] {
        &self.damp
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn field_len(&self) -> usize {
        self.damp.len()
    }

    pub fn physical_indices(&self) -> &[usize] {
        &self.physical
    }

    pub fn force_scale(&self) -> &[f64] {
        &self.force_scale
    }

    /// Bilinear weights for a point given in physical meters.
    pub fn point_weights(&self, x: f64, z: f64) -> Result<PointWeights> {
        let g = &self.grid;
        if !g.contains(x, z) {
            return Err(Error::InvalidArgument(format!(
                "point ({x}, {z}) m lies outside the physical domain"
            )));
        }
        let fx = (x / g.dx).clamp(0.0, (g.nx - 1) as f64);
        let fz = (z / g.dz).clamp(0.0, (g.nz - 1) as f64);
        let ix = (fx.floor() as usize).min(g.nx - 1);
        let iz = (fz.floor() as usize).min(g.nz - 1);
        let tx = fx - ix as f64;
        let tz = fz - iz as f64;
        let base = (iz + g.sponge_width + HALO) * self.stride + ix + g.sponge_width + HALO;
        Ok(PointWeights {
            idx: [base, base + 1, base + self.stride, base + self.stride + 1],
            w: [(1.0 - tz) * (1.0 - tx), (1.0 - tz) * tx, tz * (1.0 - tx), tz * tx],
        })
    }

    /// Laplacian of `u` along one padded row starting at field index `row`.
    fn laplacian_row(&self, u: &[f64], row: usize, out: &mut [f64]) {
        let (n, s) = (self.nxp, self.stride);
        let at = |off: isize| &u[(row as isize + off) as usize..][..n];
        let (c, xm1, xp1, xm2, xp2) = (at(0), at(-1), at(1), at(-2), at(2));
        let si = s as isize;
        let (zm1, zp1, zm2, zp2) = (at(-si), at(si), at(-2 * si), at(2 * si));
        let (ax, az) = (self.inv_dx2, self.inv_dz2);
        for i in 0..n {
            out[i] = ax * (C2 * (xm2[i] + xp2[i]) + C1 * (xm1[i] + xp1[i]) + C0 * c[i])
                + az * (C2 * (zm2[i] + zp2[i]) + C1 * (zm1[i] + zp1[i]) + C0 * c[i]);
        }
    }

    /// Unforced part of one step: `next = D (2 cur - D prev + S L cur)`.
    fn step(&self, next: &mut [f64], cur: &[f64], prev: &[f64], lap: &mut [f64]) {
        let (n, s) = (self.nxp, self.stride);
        for pz in 0..self.nzp {
            let row = (pz + HALO) * s + HALO;
            self.laplacian_row(cur, row, lap);
            let r = row..row + n;
            let (d, d2, ss) = (
                &self.damp[r.clone()],
                &self.damp2[r.clone()],
                &self.step_scale[r.clone()],
            );
            let (c, p) = (&cur[r.clone()], &prev[r.clone()]);
            for (i, out) in next[r].iter_mut().enumerate() {
                *out = d[i] * (2.0 * c[i] + ss[i] * lap[i]) - d2[i] * p[i];
            }
        }
    }

    /// Transposed step: given the final cotangent `a` of `u[n+1]`, adds
    /// `A^T a` into `cur` and `B^T a` into `prev`, using `work` as scratch.
    fn step_transpose(&self, a: &[f64], cur: &mut [f64], prev: &mut [f64], work: &mut [f64], lap: &mut [f64]) {
        let (n, s) = (self.nxp, self.stride);
        for pz in 0..self.nzp {
            let row = (pz + HALO) * s + HALO;
            let r = row..row + n;
            for ((w, f), av) in work[r.clone()].iter_mut().zip(&self.force_scale[r.clone()]).zip(&a[r]) {
                *w = f * av;
            }
        }
        for pz in 0..self.nzp {
            let row = (pz + HALO) * s + HALO;
            self.laplacian_row(work, row, lap);
            let r = row..row + n;
            let (d, d2, av) = (&self.damp[r.clone()], &self.damp2[r.clone()], &a[r.clone()]);
            for (i, c) in cur[r.clone()].iter_mut().enumerate() {
                *c += 2.0 * d[i] * av[i] + lap[i];
            }
            for (i, p) in prev[r].iter_mut().enumerate() {
                *p -= d2[i] * av[i];
            }
        }
    }

    /// Runs the forward recurrence.
    ///
    /// `force(n, next)` adds the forcing contribution `D S f[n]` into `next`
    /// (use [`Propagator::force_scale`]); `observe(n, u)` sees every time
    /// level `u[n]`, `n = 0 .. nt-1`, in order.
    pub fn forward<F, O>(&self, mut force: F, mut observe: O) -> Result<()>
    where
        F: FnMut(usize, &mut [f64]),
        O: FnMut(usize, &[f64]),
    {
        let nt = self.grid.nt;
        let len = self.field_len();
        let mut prev = vec![0.0; len];
        let mut cur = vec![0.0; len];
        let mut next = vec![0.0; len];
        let mut lap = vec![0.0; self.nxp];
        observe(0, &prev);
        observe(1, &cur);
        for n in 1..nt - 1 {
            self.step(&mut next, &cur, &prev, &mut lap);
            force(n, &mut next);
            if !all_finite(&next) {
                return Err(Error::Unstable { step: n + 1 });
            }
            observe(n + 1, &next);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(())
    }

    /// Runs the transposed recurrence backwards in time.
    ///
    /// `inject(n, ubar)` adds the direct cotangent of `u[n]` (e.g. adjoint
    /// receiver injection) for `n = nt-1` down to `2`. `collect(n, abar)`
    /// receives the final cotangent of `u[n+1]`; the cotangent of the forcing
    /// `f[n]` is `force_scale * abar`.
    pub fn adjoint<I, C>(&self, mut inject: I, mut collect: C) -> Result<()>
    where
        I: FnMut(usize, &mut [f64]),
        C: FnMut(usize, &[f64]),
    {
        let nt = self.grid.nt;
        if nt < 3 {
            return Ok(());
        }
        let len = self.field_len();
        let mut after = vec![0.0; len]; // cotangent of u[n+1]
        let mut mid = vec![0.0; len]; // cotangent of u[n]
        let mut before = vec![0.0; len]; // cotangent of u[n-1]
        let mut work = vec![0.0; len];
        let mut lap = vec![0.0; self.nxp];
        inject(nt - 1, &mut after);
        inject(nt - 2, &mut mid);
        for n in (1..nt - 1).rev() {
            if n >= 3 {
                inject(n - 1, &mut before);
            }
            self.step_transpose(&after, &mut mid, &mut before, &mut work, &mut lap);
            if !all_finite(&mid) {
                return Err(Error::Unstable { step: n });
            }
            collect(n, &after);
            std::mem::swap(&mut after, &mut mid);
            std::mem::swap(&mut mid, &mut before);
            before.fill(0.0);
        }
        Ok(())
    }
}

/// Branch-free finiteness check; `inf * 0` and `NaN * 0` are both NaN.
fn all_finite(u: &[f64]) -> bool {
    let mut acc = [0.0f64; 4];
    for c in u.chunks(4) {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v * 0.0;
        }
    }
    !acc.iter().any(|a| a.is_nan())
}

/// Distance in cells from padded index `p` into the sponge (0 inside the
/// physical domain).
fn sponge_depth(p: usize, sw: usize, n: usize) -> usize {
    if p < sw {
        sw - p
    } else if p >= sw + n {
        p - (sw + n - 1)
    } else {
        0
    }
}
