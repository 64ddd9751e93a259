use std::f64::consts::PI;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Ricker wavelet `(1 - 2 pi^2 f0^2 (t - t0)^2) exp(-pi^2 f0^2 (t - t0)^2)`
/// sampled at the grid's time step.
pub fn ricker_wavelet(f0: f64, grid: &Grid, t0: f64) -> Result<Vec<f64>> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "peak frequency must be positive, got {f0}"
        )));
    }
    let nyquist = 0.5 / grid.dt;
    if f0 >= nyquist / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "peak frequency {f0} Hz is too high for dt = {} s (must be below {} Hz)",
            grid.dt,
            nyquist / 2.0
        )));
    }
    if t0 < 1.0 / f0 - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "wavelet delay {t0} s must be at least 1/f0 = {} s",
            1.0 / f0
        )));
    }
    Ok(grid.times().map(|t| ricker(f0, t - t0)).collect())
}

pub(crate) fn ricker(f0: f64, tau: f64) -> f64 {
    let a = (PI * f0 * tau).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}
