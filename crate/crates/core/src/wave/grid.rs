use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stability ceiling for `dt * v_max * sqrt(1/dx^2 + 1/dz^2)`.
pub const CFL_LIMIT: f64 = 0.7;

pub const DEFAULT_SPONGE_WIDTH: usize = 40;
pub const DEFAULT_SPONGE_DAMPING: f64 = 0.0035;

/// Space-time discretization. Spacings are in meters, time in seconds.
///
/// The physical domain has `nz x nx` nodes; node `(iz, ix)` sits at
/// `(x, z) = (ix * dx, iz * dz)`. An absorbing sponge of `sponge_width` cells
/// surrounds it on all four sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub nt: usize,
    pub dt: f64,
    pub sponge_width: usize,
    #[serde(default = "default_damping")]
    pub sponge_damping: f64,
}

fn default_damping() -> f64 {
    DEFAULT_SPONGE_DAMPING
}

impl Grid {
    pub fn new(nz: usize, nx: usize, dz: f64, dx: f64, nt: usize, dt: f64) -> Result<Self> {
        let g = Grid {
            nx,
            nz,
            dx,
            dz,
            nt,
            dt,
            sponge_width: DEFAULT_SPONGE_WIDTH,
            sponge_damping: DEFAULT_SPONGE_DAMPING,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_sponge(mut self, width: usize, damping: f64) -> Result<Self> {
        self.sponge_width = width;
        self.sponge_damping = damping;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.nz < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2x2 nodes, got {}x{}",
                self.nz, self.nx
            )));
        }
        if self.nt < 2 {
            return Err(Error::InvalidArgument(format!("nt must be >= 2, got {}", self.nt)));
        }
        for (name, v) in [("dx", self.dx), ("dz", self.dz), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sponge_damping >= 0.0 && self.sponge_damping.is_finite()) {
            return Err(Error::InvalidArgument("sponge damping must be non-negative".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nz
    }

    /// Padded (sponge-inclusive) extents `(nz, nx)`.
    pub fn padded(&self) -> (usize, usize) {
        (self.nz + 2 * self.sponge_width, self.nx + 2 * self.sponge_width)
    }

    pub fn width_m(&self) -> f64 {
        (self.nx - 1) as f64 * self.dx
    }

    pub fn depth_m(&self) -> f64 {
        (self.nz - 1) as f64 * self.dz
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nt).map(move |n| n as f64 * self.dt)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let eps = 1e-9;
        x >= -eps && z >= -eps && x <= self.width_m() + eps && z <= self.depth_m() + eps
    }

    /// CFL number for a maximum velocity in m/s.
    pub fn cfl(&self, v_max: f64) -> f64 {
        self.dt * v_max * (1.0 / (self.dx * self.dx) + 1.0 / (self.dz * self.dz)).sqrt()
    }

    pub fn check_cfl(&self, v_max: f64) -> Result<()> {
        let cfl = self.cfl(v_max);
        if cfl > CFL_LIMIT {
            return Err(Error::Cfl { cfl, limit: CFL_LIMIT });
        }
        Ok(())
    }

    /// Largest stable step for `v_max`, scaled by `safety` in (0, 1].
    pub fn stable_dt(dx: f64, dz: f64, v_max: f64, safety: f64) -> f64 {
        safety * CFL_LIMIT / (v_max * (1.0 / (dx * dx) + 1.0 / (dz * dz)).sqrt())
    }
}
