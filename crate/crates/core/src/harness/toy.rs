use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::{Grid, ModelPerturbation, SquaredSlownessModel, MAX_VELOCITY, MIN_VELOCITY};

/// Horizontally layered medium cut by one planar dipping fault.
///
/// Interfaces sit at `interface_depths_m` (top to bottom) left of the fault
/// and `fault_offset_m` deeper to its right. The fault trace passes through
/// `(fault_x_m, 0)` and dips at `fault_dip_deg` from horizontal, downward to
/// the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub velocities: Vec<f64>,
    pub interface_depths_m: Vec<f64>,
    pub fault_x_m: f64,
    pub fault_dip_deg: f64,
    pub fault_offset_m: f64,
    /// Gaussian standard deviation (cells) of the background smoothing.
    pub smoothing_cells: f64,
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("toy model: {m}")));
        if self.velocities.len() < 2 {
            return bad(format!("need at least 2 layers, got {}", self.velocities.len()));
        }
        if self.interface_depths_m.len() + 1 != self.velocities.len() {
            return bad(format!(
                "{} layers need {} interface depths, got {}",
                self.velocities.len(),
                self.velocities.len() - 1,
                self.interface_depths_m.len()
            ));
        }
        if let Some(v) = self
            .velocities
            .iter()
            .find(|v| !(MIN_VELOCITY..=MAX_VELOCITY).contains(*v))
        {
            return bad(format!("velocity {v} m/s outside [{MIN_VELOCITY}, {MAX_VELOCITY}]"));
        }
        if self.interface_depths_m.windows(2).any(|w| w[1] <= w[0]) {
            return bad("interface depths must increase".into());
        }
        if !(self.fault_dip_deg > 0.0 && self.fault_dip_deg <= 90.0) {
            return bad(format!(
                "fault dip must lie in (0, 90] degrees, got {}",
                self.fault_dip_deg
            ));
        }
        if !(self.smoothing_cells > 0.0 && self.smoothing_cells.is_finite()) {
            return bad(format!(
                "smoothing length must be positive, got {}",
                self.smoothing_cells
            ));
        }
        Ok(())
    }
}

/// True model, smooth background and their difference, all on one grid.
#[derive(Clone, Debug)]
pub struct ToyModel {
    pub velocity: Vec<f64>,
    pub m_true: SquaredSlownessModel,
    pub m0: SquaredSlownessModel,
    pub dm: ModelPerturbation,
}

pub fn make_toy_model(spec: &ToySpec, grid: &Grid) -> Result<ToyModel> {
    spec.validate()?;
    let run = 1.0 / spec.fault_dip_deg.to_radians().tan();
    let mut velocity = Vec::with_capacity(grid.cells());
    for iz in 0..grid.nz {
        let z = iz as f64 * grid.dz;
        let fault_x = spec.fault_x_m + z * run;
        for ix in 0..grid.nx {
            let x = ix as f64 * grid.dx;
            let shift = if x > fault_x { spec.fault_offset_m } else { 0.0 };
            let layer = spec.interface_depths_m.iter().filter(|&&d| z >= d + shift).count();
            velocity.push(spec.velocities[layer]);
        }
    }
    let m_true = SquaredSlownessModel::from_velocity(*grid, &velocity)?;
    let smooth = gaussian_smooth(m_true.values(), grid.nz, grid.nx, spec.smoothing_cells);
    let m0 = SquaredSlownessModel::new(*grid, smooth)?;
    let dm = ModelPerturbation::new(
        *grid,
        m_true.values().iter().zip(m0.values()).map(|(t, b)| t - b).collect(),
    )?;
    Ok(ToyModel {
        velocity,
        m_true,
        m0,
        dm,
    })
}

/// Sum over all integers `d = offset + k * period` of the unit-mass sampled
/// Gaussian `exp(-d^2 / (2 s^2)) / Z`, with `Z` the sum over all integers.
fn periodized_gaussian(offset: i64, period: usize, s: f64) -> f64 {
    let p = period as f64;
    if s > 0.25 * p && s > 3.0 {
        // Fourier series of the periodized Gaussian, renormalized so that one
        // period of integer samples sums to one.
        let mut acc = 1.0;
        let mut mass = 1.0;
        for k in 1.. {
            let a = (-2.0 * (PI * k as f64 * s / p).powi(2)).exp();
            if a < 1e-18 {
                break;
            }
            acc += 2.0 * a * (2.0 * PI * k as f64 * offset as f64 / p).cos();
            if k % period == 0 {
                mass += 2.0 * a;
            }
        }
        acc / (p * mass)
    } else {
        let reach = (10.0 * s).ceil() as i64 + 1;
        let z: f64 = (-reach..=reach)
            .map(|d| (-((d * d) as f64) / (2.0 * s * s)).exp())
            .sum();
        let mut acc = 0.0;
        let base = offset.rem_euclid(period as i64);
        let per = period as i64;
        let mut d = base - ((base + reach) / per) * per;
        while d <= reach {
            if d >= -reach {
                acc += (-((d * d) as f64) / (2.0 * s * s)).exp();
            }
            d += per;
        }
        acc / z
    }
}

/// Smoothing matrix for one axis: convolution of the half-sample symmetric
/// extension (`x[-1-j] = x[j]`, period `2n`) with the periodized Gaussian.
fn smoothing_matrix(n: usize, s: f64) -> Vec<f64> {
    let period = 2 * n;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let direct = periodized_gaussian(i as i64 - j as i64, period, s);
            let mirrored = periodized_gaussian(i as i64 + j as i64 + 1, period, s);
            k[i * n + j] = direct + mirrored;
        }
    }
    k
}

/// Separable Gaussian smoothing with standard deviation `s` cells and
/// symmetric (edge-repeating) boundary extension. Preserves the mean exactly
/// and tends to the domain mean as `s` grows.
pub fn gaussian_smooth(values: &[f64], nz: usize, nx: usize, s: f64) -> Vec<f64> {
    let kx = smoothing_matrix(nx, s);
    let kz = smoothing_matrix(nz, s);
    let mut rows = vec![0.0; nz * nx];
    for iz in 0..nz {
        let src = &values[iz * nx..(iz + 1) * nx];
        for ix in 0..nx {
            rows[iz * nx + ix] = (0..nx).map(|j| kx[ix * nx + j] * src[j]).sum();
        }
    }
    let mut out = vec![0.0; nz * nx];
    for iz in 0..nz {
        for j in 0..nz {
            let w = kz[iz * nz + j];
            if w == 0.0 {
                continue;
            }
            for ix in 0..nx {
                out[iz * nx + ix] += w * rows[j * nx + ix];
            }
        }
    }
    out
}

/// Default toy: four layers and a normal fault, scaled to the grid.
pub fn default_toy_spec(grid: &Grid) -> ToySpec {
    let depth = (grid.nz - 1) as f64 * grid.dz;
    let width = (grid.nx - 1) as f64 * grid.dx;
    ToySpec {
        velocities: vec![1800.0, 2100.0, 2500.0, 2900.0],
        interface_depths_m: vec![0.35 * depth, 0.55 * depth, 0.78 * depth],
        fault_x_m: 0.35 * width,
        fault_dip_deg: 60.0,
        fault_offset_m: 0.1 * depth,
        smoothing_cells: 10.0,
    }
}
