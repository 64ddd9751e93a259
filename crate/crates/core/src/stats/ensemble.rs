use serde::{Deserialize, Serialize};

use super::welford::Welford;
use crate::error::{Error, Result};
use crate::wave::{Grid, ModelPerturbation, ShotRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin_every: usize,
}

/// Thinned posterior image samples `g(z, w_j)` on one grid.
#[derive(Clone, Debug)]
pub struct PosteriorEnsemble {
    pub grid: Grid,
    pub samples: Vec<Vec<f64>>,
    /// Chain iteration each sample was taken at.
    pub iterations: Vec<usize>,
    pub meta: ChainMetadata,
}

impl PosteriorEnsemble {
    pub fn new(grid: Grid, meta: ChainMetadata) -> Self {
        Self {
            grid,
            samples: Vec::new(),
            iterations: Vec::new(),
            meta,
        }
    }

    pub fn push(&mut self, iteration: usize, image: Vec<f64>) -> Result<()> {
        if image.len() != self.grid.cells() {
            return Err(Error::shape(
                "posterior ensemble",
                "sample cell count",
                self.grid.cells(),
                image.len(),
            ));
        }
        self.samples.push(image);
        self.iterations.push(iteration);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn accumulate(&self) -> Result<Welford> {
        let cells = self.grid.cells();
        let mut acc = Welford::new(cells);
        for (j, s) in self.samples.iter().enumerate() {
            if s.len() != cells {
                return Err(Error::shape(
                    "posterior ensemble",
                    format!("sample {j} cell count"),
                    cells,
                    s.len(),
                ));
            }
            acc.push(s);
        }
        Ok(acc)
    }
}

/// Bayesian model average `(1/T) sum_j g(z, w_j)`.
pub fn bma_mean(ensemble: &PosteriorEnsemble) -> Result<ModelPerturbation> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument(
            "model averaging needs at least one sample".into(),
        ));
    }
    let acc = ensemble.accumulate()?;
    ModelPerturbation::new(ensemble.grid, acc.mean().to_vec())
}

/// Per-cell sample standard deviation (divisor `T - 1`).
pub fn pointwise_std(ensemble: &PosteriorEnsemble) -> Result<ModelPerturbation> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pointwise std needs at least two samples, got {}",
            ensemble.len()
        )));
    }
    let acc = ensemble.accumulate()?;
    ModelPerturbation::new(ensemble.grid, acc.std())
}

/// Nearest node index for a coordinate; exact midpoints snap to the lower node.
fn snap(coord: f64, spacing: f64, n: usize, axis: &str) -> Result<usize> {
    let f = coord / spacing;
    if !(f >= -1e-9 && f <= (n - 1) as f64 + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "{axis} = {coord} m lies outside the grid [0, {}]",
            (n - 1) as f64 * spacing
        )));
    }
    let lower = f.floor().max(0.0);
    let idx = if f - lower > 0.5 {
        lower as usize + 1
    } else {
        lower as usize
    };
    Ok(idx.min(n - 1))
}

/// `(iz, ix)` of the node nearest `point = (x, z)`; ties snap to the lower node.
pub fn nearest_cell(grid: &Grid, point: (f64, f64)) -> Result<(usize, usize)> {
    Ok((
        snap(point.1, grid.dz, grid.nz, "z")?,
        snap(point.0, grid.dx, grid.nx, "x")?,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StdProfile {
    pub x: f64,
    pub column: usize,
    /// Values down the column, top to bottom.
    pub values: Vec<f64>,
}

/// Vertical slices of an image at the columns nearest to `x_positions` (m).
pub fn std_profiles(std_image: &ModelPerturbation, x_positions: &[f64]) -> Result<Vec<StdProfile>> {
    let g = *std_image.grid();
    x_positions
        .iter()
        .map(|&x| {
            let column = snap(x, g.dx, g.nx, "x")?;
            let values = (0..g.nz).map(|iz| std_image.values()[iz * g.nx + column]).collect();
            Ok(StdProfile { x, column, values })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Bin edges, `counts.len() + 1` entries.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// All values were equal; a single bin holds every sample.
    pub degenerate: bool,
    pub cell: (usize, usize),
    pub values: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Sample standard deviation of the underlying values (divisor `n - 1`).
    pub fn sample_std(&self) -> f64 {
        let mut acc = Welford::new(1);
        for &v in &self.values {
            acc.push(&[v]);
        }
        acc.std()[0]
    }
}

/// Histogram of the value at the cell nearest `point = (x, z)` across samples.
/// Bin edges span `[min, max]` of the values.
pub fn point_histogram(samples: &[Vec<f64>], grid: &Grid, point: (f64, f64), bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "histogram needs at least 2 bins, got {bins}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("histogram of zero samples".into()));
    }
    let (iz, ix) = nearest_cell(grid, point)?;
    let cell = iz * grid.nx + ix;
    let values: Vec<f64> = samples
        .iter()
        .map(|s| {
            s.get(cell)
                .copied()
                .ok_or_else(|| Error::shape("point_histogram", "sample cell count", grid.cells(), s.len()))
        })
        .collect::<Result<_>>()?;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(Histogram {
            edges: vec![lo, hi],
            counts: vec![values.len()],
            degenerate: true,
            cell: (iz, ix),
            values,
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + b as f64 * width })
        .collect();
    let mut counts = vec![0; bins];
    for &v in &values {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        degenerate: false,
        cell: (iz, ix),
        values,
    })
}

/// `20 log10(||signal|| / ||noise||)` over all records.
pub fn snr(signal: &[ShotRecord], noise: &[ShotRecord]) -> Result<f64> {
    if signal.len() != noise.len() {
        return Err(Error::shape("snr", "record count", signal.len(), noise.len()));
    }
    let mut s2 = 0.0;
    let mut n2 = 0.0;
    for (s, n) in signal.iter().zip(noise) {
        n.check_dims(s.nt, s.n_receivers)?;
        s2 += s.norm_sq();
        n2 += n.norm_sq();
    }
    if n2 == 0.0 {
        return Err(Error::InvalidArgument("noise has zero norm".into()));
    }
    Ok(10.0 * (s2 / n2).log10())
}

/// Mean pointwise std at reflector cells versus homogeneous cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StdLocalization {
    /// Cells with `|dm_true|` above its 90th percentile.
    pub reflector: f64,
    /// Cells with `|dm_true|` below its 10th percentile.
    pub homogeneous: f64,
}

impl StdLocalization {
    pub fn ratio(&self) -> f64 {
        self.reflector / self.homogeneous
    }
}

/// Nearest-rank percentile `q` in `[0, 100]` of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Averages `std_image` over each cell's 5-point neighborhood (the cell and
/// its in-grid edge neighbors), then takes the mean over reflector and over
/// homogeneous cells of `dm_true`.
pub fn std_localization(std_image: &ModelPerturbation, dm_true: &ModelPerturbation) -> Result<StdLocalization> {
    let g = *std_image.grid();
    if dm_true.values().len() != g.cells() {
        return Err(Error::shape(
            "std_localization",
            "cell count",
            g.cells(),
            dm_true.values().len(),
        ));
    }
    let s = std_image.values();
    let mut local = vec![0.0; g.cells()];
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            let mut sum = s[iz * g.nx + ix];
            let mut n = 1.0;
            let mut add = |z: usize, x: usize| {
                sum += s[z * g.nx + x];
                n += 1.0;
            };
            if iz > 0 {
                add(iz - 1, ix);
            }
            if iz + 1 < g.nz {
                add(iz + 1, ix);
            }
            if ix > 0 {
                add(iz, ix - 1);
            }
            if ix + 1 < g.nx {
                add(iz, ix + 1);
            }
            local[iz * g.nx + ix] = sum / n;
        }
    }
    let mag: Vec<f64> = dm_true.values().iter().map(|v| v.abs()).collect();
    let hi = percentile(&mag, 90.0);
    let lo = percentile(&mag, 10.0);
    let mean_where = |keep: &dyn Fn(f64) -> bool| -> Result<f64> {
        let (sum, n) = mag
            .iter()
            .zip(&local)
            .filter(|(m, _)| keep(**m))
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        if n == 0 {
            return Err(Error::InvalidArgument("no cells in percentile class".into()));
        }
        Ok(sum / n as f64)
    };
    Ok(StdLocalization {
        reflector: mean_where(&|m| m > hi)?,
        homogeneous: mean_where(&|m| m < lo)?,
    })
}
