use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{Error, Result};

/// A point source: a wavelet injected at `(x, z)` meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSignature {
    pub wavelet: Vec<f64>,
    pub location: (f64, f64),
}

impl SourceSignature {
    pub fn new(wavelet: Vec<f64>, location: (f64, f64)) -> Self {
        Self { wavelet, location }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            wavelet: self.wavelet.iter().map(|v| v * factor).collect(),
            location: self.location,
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.wavelet.len() != grid.nt {
            return Err(Error::shape("source", "wavelet length", grid.nt, self.wavelet.len()));
        }
        let (x, z) = self.location;
        if !grid.contains(x, z) {
            return Err(Error::InvalidArgument(format!(
                "source at ({x}, {z}) m lies outside the physical domain"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionGeometry {
    pub receivers: Vec<(f64, f64)>,
    pub sources: Vec<SourceSignature>,
}

impl AcquisitionGeometry {
    pub fn new(receivers: Vec<(f64, f64)>, sources: Vec<SourceSignature>) -> Self {
        Self { receivers, sources }
    }

    /// `n` evenly spaced points at depth `z` spanning `[x0, x1]`.
    pub fn line(n: usize, x0: f64, x1: f64, z: f64) -> Vec<(f64, f64)> {
        if n == 1 {
            return vec![(0.5 * (x0 + x1), z)];
        }
        (0..n)
            .map(|i| (x0 + (x1 - x0) * i as f64 / (n - 1) as f64, z))
            .collect()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.receivers.is_empty() {
            return Err(Error::InvalidArgument("geometry needs at least one receiver".into()));
        }
        for &(x, z) in &self.receivers {
            if !grid.contains(x, z) {
                return Err(Error::InvalidArgument(format!(
                    "receiver at ({x}, {z}) m lies outside the physical domain"
                )));
            }
        }
        for s in &self.sources {
            s.check(grid)?;
        }
        Ok(())
    }
}

/// Receiver traces, stored time-major: `traces[n * n_receivers + r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub nt: usize,
    pub n_receivers: usize,
    pub traces: Vec<f64>,
    /// Physical source index or encoding id.
    pub id: usize,
}

impl ShotRecord {
    pub fn zeros(nt: usize, n_receivers: usize, id: usize) -> Self {
        Self {
            nt,
            n_receivers,
            traces: vec![0.0; nt * n_receivers],
            id,
        }
    }

    pub fn new(nt: usize, n_receivers: usize, traces: Vec<f64>, id: usize) -> Result<Self> {
        if traces.len() != nt * n_receivers {
            return Err(Error::shape(
                "shot record",
                "sample count",
                nt * n_receivers,
                traces.len(),
            ));
        }
        if let Some(i) = traces.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("shot record sample {i}")));
        }
        Ok(Self {
            nt,
            n_receivers,
            traces,
            id,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn at(&self, n: usize, r: usize) -> f64 {
        self.traces[n * self.n_receivers + r]
    }

    pub fn trace(&self, r: usize) -> Vec<f64> {
        (0..self.nt).map(|n| self.at(n, r)).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.traces.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &ShotRecord) -> f64 {
        crate::autodiff::dot(&self.traces, &other.traces)
    }

    pub fn check_dims(&self, nt: usize, n_receivers: usize) -> Result<()> {
        if self.nt != nt {
            return Err(Error::shape("shot record", "nt", nt, self.nt));
        }
        if self.n_receivers != n_receivers {
            return Err(Error::shape(
                "shot record",
                "receiver count",
                n_receivers,
                self.n_receivers,
            ));
        }
        Ok(())
    }

    /// `self - other`, keeping `self.id`.
    pub fn minus(&self, other: &ShotRecord) -> Result<ShotRecord> {
        other.check_dims(self.nt, self.n_receivers)?;
        Ok(ShotRecord {
            nt: self.nt,
            n_receivers: self.n_receivers,
            traces: self.traces.iter().zip(&other.traces).map(|(a, b)| a - b).collect(),
            id: self.id,
        })
    }

    pub fn axpy(&mut self, alpha: f64, other: &ShotRecord) {
        for (a, b) in self.traces.iter_mut().zip(&other.traces) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, factor: f64) -> ShotRecord {
        ShotRecord {
            traces: self.traces.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Snapshots of the wavefield on the physical grid, time-major
/// (`nt x nz x nx`).
#[derive(Clone, Debug)]
pub struct Wavefield {
    pub nt: usize,
    pub nz: usize,
    pub nx: usize,
    pub snapshots: Vec<f64>,
    /// Snapshots hold the second time derivative rather than the field.
    pub second_derivative: bool,
}

impl Wavefield {
    pub fn snapshot(&self, n: usize) -> &[f64] {
        let plane = self.nz * self.nx;
        &self.snapshots[n * plane..(n + 1) * plane]
    }
}
