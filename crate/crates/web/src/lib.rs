//! Browser bindings over the desk-preset grid: toy model views, wavefield
//! snapshots and draws from the deep prior.

use dip_imaging::harness::{make_toy_model, ExperimentConfig, ToyModel};
use dip_imaging::prior::{init_latent, network_forward, sample_prior_weights};
use dip_imaging::wave::{ricker_wavelet, solve_forward, AcquisitionGeometry, Grid, SourceSignature};
use dip_imaging::{Error, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn desk_grid() -> Result<(ExperimentConfig, Grid)> {
    let c = ExperimentConfig::desk();
    let g = c.build_grid()?;
    Ok((c, g))
}

fn toy(fault_offset_m: f64, smoothing_cells: f64) -> Result<(ExperimentConfig, Grid, ToyModel)> {
    let (c, g) = desk_grid()?;
    let mut spec = c.toy_spec(&g);
    spec.fault_offset_m = fault_offset_m;
    spec.smoothing_cells = smoothing_cells;
    let t = make_toy_model(&spec, &g)?;
    Ok((c, g, t))
}

/// `[nz, nx, nt]` of the demo grid.
#[wasm_bindgen]
pub fn grid_shape() -> std::result::Result<Vec<u32>, JsError> {
    let (_, g) = desk_grid().map_err(js)?;
    Ok(vec![g.nz as u32, g.nx as u32, g.nt as u32])
}

/// Grid spacing (m) and time step (s).
#[wasm_bindgen]
pub fn grid_steps() -> std::result::Result<Vec<f64>, JsError> {
    let (_, g) = desk_grid().map_err(js)?;
    Ok(vec![g.dx, g.dt])
}

pub fn toy_values(kind: &str, fault_offset_m: f64, smoothing_cells: f64) -> Result<Vec<f64>> {
    let (_, _, t) = toy(fault_offset_m, smoothing_cells)?;
    match kind {
        "velocity" => Ok(t.velocity),
        "m0" => Ok(t.m0.values().to_vec()),
        "dm" => Ok(t.dm.values().to_vec()),
        other => Err(Error::InvalidArgument(format!(
            "unknown view `{other}`, expected velocity, m0 or dm"
        ))),
    }
}

/// Row-major `nz x nx` image of the toy model: `velocity` (m/s), `m0` or `dm` (s^2/km^2).
#[wasm_bindgen]
pub fn toy_image(kind: &str, fault_offset_m: f64, smoothing_cells: f64) -> std::result::Result<Vec<f64>, JsError> {
    toy_values(kind, fault_offset_m, smoothing_cells).map_err(js)
}

pub fn snapshot_values(
    source_x_m: f64,
    time_s: f64,
    fault_offset_m: f64,
    smoothing_cells: f64,
    background: bool,
) -> Result<Vec<f64>> {
    let (c, g, t) = toy(fault_offset_m, smoothing_cells)?;
    let a = &c.acquisition;
    let wavelet = ricker_wavelet(a.f0, &g, a.t0)?;
    let src = vec![SourceSignature::new(wavelet, (source_x_m, a.source_depth_m))];
    let geom = AcquisitionGeometry::new(vec![(source_x_m, a.receiver_depth_m)], src.clone());
    let model = if background { &t.m0 } else { &t.m_true };
    let (_, field) = solve_forward(model, &src, &geom)?;
    let n = ((time_s / g.dt).round().max(0.0) as usize).min(g.nt - 1);
    Ok(field.snapshot(n).to_vec())
}

/// Pressure field at `time_s` for a Ricker source at `source_x_m`, in the
/// true model or (`background`) the smoothed one.
#[wasm_bindgen]
pub fn wavefield_snapshot(
    source_x_m: f64,
    time_s: f64,
    fault_offset_m: f64,
    smoothing_cells: f64,
    background: bool,
) -> std::result::Result<Vec<f64>, JsError> {
    snapshot_values(source_x_m, time_s, fault_offset_m, smoothing_cells, background).map_err(js)
}

pub fn prior_values(seed: u32, lambda: f64) -> Result<Vec<f64>> {
    let (c, _) = desk_grid()?;
    let arch = c.architecture();
    let z = init_latent(&arch, c.seeds.latent)?;
    let w = sample_prior_weights(&arch, lambda, seed as u64)?;
    Ok(network_forward(&arch, &z, &w)?.into_image())
}

/// One image `g(z, w)` with `w ~ N(0, lambda^-2 I)` and the desk latent input.
#[wasm_bindgen]
pub fn prior_sample(seed: u32, lambda: f64) -> std::result::Result<Vec<f64>, JsError> {
    prior_values(seed, lambda).map_err(js)
}
