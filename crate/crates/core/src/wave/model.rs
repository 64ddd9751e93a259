//! Gridded medium parameters.
//!
//! Squared slowness is stored in s^2/km^2 so that typical perturbations are
//! O(0.01 - 0.1) rather than O(1e-8); the wave solver converts grid spacings to
//! kilometers accordingly. Velocities at the API boundary are in m/s.

use super::grid::Grid;
use crate::error::{Error, Result};

pub const MIN_VELOCITY: f64 = 100.0;
pub const MAX_VELOCITY: f64 = 10_000.0;

/// Squared slowness (s^2/km^2) for a velocity in m/s.
pub fn squared_slowness(velocity: f64) -> f64 {
    let v_km = velocity / 1000.0;
    1.0 / (v_km * v_km)
}

/// Velocity (m/s) for a squared slowness in s^2/km^2.
pub fn velocity(squared_slowness: f64) -> f64 {
    1000.0 / squared_slowness.sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquaredSlownessModel {
    grid: Grid,
    m: Vec<f64>,
}

impl SquaredSlownessModel {
    pub fn new(grid: Grid, m: Vec<f64>) -> Result<Self> {
        if m.len() != grid.cells() {
            return Err(Error::shape(
                "squared slowness model",
                "cell count",
                grid.cells(),
                m.len(),
            ));
        }
        for (i, &v) in m.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "squared slowness must be positive and finite, cell {i} has {v}"
                )));
            }
            let vel = velocity(v);
            if !(MIN_VELOCITY..=MAX_VELOCITY).contains(&vel) {
                return Err(Error::InvalidArgument(format!(
                    "velocity {vel:.1} m/s at cell {i} outside [{MIN_VELOCITY}, {MAX_VELOCITY}]"
                )));
            }
        }
        Ok(Self { grid, m })
    }

    pub fn from_velocity(grid: Grid, velocity: &[f64]) -> Result<Self> {
        Self::new(grid, velocity.iter().map(|&v| squared_slowness(v)).collect())
    }

    pub fn homogeneous(grid: Grid, velocity: f64) -> Result<Self> {
        Self::new(grid, vec![squared_slowness(velocity); grid.cells()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    pub fn max_velocity(&self) -> f64 {
        let m_min = self.m.iter().cloned().fold(f64::INFINITY, f64::min);
        velocity(m_min)
    }

    /// `m + h * dm`, validated.
    pub fn perturbed(&self, dm: &ModelPerturbation, h: f64) -> Result<Self> {
        dm.check_grid(&self.grid)?;
        Self::new(
            self.grid,
            self.m.iter().zip(dm.values()).map(|(m, d)| m + h * d).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPerturbation {
    grid: Grid,
    dm: Vec<f64>,
}

impl ModelPerturbation {
    pub fn new(grid: Grid, dm: Vec<f64>) -> Result<Self> {
        if dm.len() != grid.cells() {
            return Err(Error::shape("model perturbation", "cell count", grid.cells(), dm.len()));
        }
        if let Some(i) = dm.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("model perturbation cell {i}")));
        }
        Ok(Self { grid, dm })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            dm: vec![0.0; grid.cells()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.dm
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.dm
    }

    pub fn into_values(self) -> Vec<f64> {
        self.dm
    }

    pub fn norm(&self) -> f64 {
        crate::autodiff::norm(&self.dm)
    }

    /// `||self - other|| / ||other||`.
    pub fn relative_error(&self, truth: &ModelPerturbation) -> f64 {
        let diff: f64 = self
            .dm
            .iter()
            .zip(&truth.dm)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / truth.norm().max(f64::MIN_POSITIVE)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.nx != grid.nx {
            return Err(Error::shape("model perturbation", "nx", grid.nx, self.grid.nx));
        }
        if self.grid.nz != grid.nz {
            return Err(Error::shape("model perturbation", "nz", grid.nz, self.grid.nz));
        }
        Ok(())
    }
}
