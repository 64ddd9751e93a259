use serde::{Deserialize, Serialize};

use super::checksum::sha256_hex;
use super::simulate::AcquisitionSpec;
use super::toy::{default_toy_spec, ToySpec};
use crate::error::{Error, Result};
use crate::inference::{MapConfig, MleConfig, SgldConfig};
use crate::prior::{Activation, NetworkArchitecture};
use crate::wave::{Grid, MAX_VELOCITY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Smoke,
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected smoke, desk or paper)"
            ))),
        }
    }
}

/// Node counts, spacing and record length. `nt` and `dt` follow from the
/// CFL bound at the fastest toy velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nz: usize,
    pub nx: usize,
    pub spacing_m: f64,
    pub duration_s: f64,
    /// Fraction of the CFL limit used for `dt`.
    pub cfl_safety: f64,
    pub sponge_width: usize,
    pub sponge_damping: f64,
}

/// Overrides of the grid-scaled default toy; absent keys keep the default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub velocities: Option<Vec<f64>>,
    pub interface_depths_m: Option<Vec<f64>>,
    pub fault_x_m: Option<f64>,
    pub fault_dip_deg: Option<f64>,
    pub fault_offset_m: Option<f64>,
    pub smoothing_cells: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub noise_variance: f64,
    /// Scale the sources so the data SNR hits this value in expectation.
    pub target_snr_db: Option<f64>,
    /// Fixed source amplitude, used when `target_snr_db` is absent.
    #[serde(default = "one")]
    pub source_amplitude: f64,
    /// Simulate with background + Born instead of the nonlinear solve.
    #[serde(default)]
    pub linear: bool,
    pub n_encodings: usize,
    /// Draw a fresh encoding at every SGLD update instead of fixing them once.
    #[serde(default)]
    pub redraw_encodings: bool,
}

fn one() -> f64 {
    1.0
}

/// Overrides of the default architecture (output size comes from the grid).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub latent_channels: Option<usize>,
    pub down_channels: Option<Vec<usize>>,
    pub up_channels: Option<Vec<usize>>,
    pub skip_channels: Option<Vec<usize>>,
    pub kernel: Option<usize>,
    pub leaky_slope: Option<f64>,
    pub output_bias: Option<bool>,
    pub fan_in_scaling: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleSection {
    pub max_iterations: usize,
    #[serde(default = "yes")]
    pub early_stopping: bool,
    pub step: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub step: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldSection {
    pub epsilon: f64,
    pub lambda: f64,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin_every: usize,
    pub decay_k0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    /// Histogram probe points `[x, z]` in meters.
    pub probes: Vec<[f64; 2]>,
    /// Lateral positions (m) of the std depth profiles.
    pub profile_x_m: Vec<f64>,
    pub histogram_bins: usize,
    pub prior_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Noise and encodings.
    pub data: u64,
    pub latent: u64,
    /// Chain, MAP/MLE minibatches and prior statistics.
    pub chain: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            data: seed,
            latent: seed,
            chain: seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset this config was derived from, for the manifest.
    pub preset: Option<Preset>,
    pub grid: GridSection,
    #[serde(default)]
    pub toy: ToySection,
    pub acquisition: AcquisitionSpec,
    pub data: DataSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub mle: MleSection,
    pub map: MapSection,
    pub sgld: SgldSection,
    pub stats: StatsSection,
    pub seeds: Seeds,
    /// Output directory; not part of the config hash.
    #[serde(default = "default_out")]
    pub output_dir: String,
}

fn default_out() -> String {
    "out".into()
}

/// Every key with a one-line description, for `--help`.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("preset", "smoke | desk | paper (informational)"),
    ("output_dir", "directory for arrays, images, CSVs and the manifest"),
    ("grid.nz, grid.nx", "node counts"),
    ("grid.spacing_m", "node spacing in both directions (m)"),
    ("grid.duration_s", "record length (s)"),
    ("grid.cfl_safety", "dt as a fraction of the stable step"),
    (
        "grid.sponge_width, grid.sponge_damping",
        "absorbing layer cells and coefficient",
    ),
    ("toy.velocities", "layer velocities top to bottom (m/s)"),
    ("toy.interface_depths_m", "interface depths left of the fault (m)"),
    (
        "toy.fault_x_m, toy.fault_dip_deg, toy.fault_offset_m",
        "fault surface position, dip, throw",
    ),
    (
        "toy.smoothing_cells",
        "Gaussian std of the background smoothing (cells)",
    ),
    (
        "acquisition.n_sources, acquisition.n_receivers",
        "shot and receiver counts",
    ),
    (
        "acquisition.source_depth_m, acquisition.receiver_depth_m",
        "line depths (m)",
    ),
    (
        "acquisition.f0, acquisition.t0",
        "Ricker peak frequency (Hz) and delay (s)",
    ),
    ("data.noise_variance", "measurement noise variance per sample"),
    ("data.target_snr_db", "calibrate the source amplitude to this SNR"),
    ("data.source_amplitude", "fixed amplitude when no SNR target is set"),
    ("data.linear", "simulate with Born instead of the nonlinear solve"),
    ("data.n_encodings", "number of supershots"),
    ("data.redraw_encodings", "fresh encoding at every SGLD update"),
    (
        "network.*",
        "latent_channels, down/up/skip_channels, kernel, leaky_slope, output_bias, fan_in_scaling",
    ),
    (
        "mle.max_iterations, mle.early_stopping, mle.step",
        "SGD on dm; step defaults to 1 / Lipschitz",
    ),
    ("map.step, map.iterations", "SGD on the network weights"),
    ("sgld.epsilon, sgld.lambda", "step size and prior precision scale"),
    ("sgld.total_iterations, sgld.burn_in, sgld.thin_every", "chain schedule"),
    ("sgld.decay_k0", "optional polynomial step decay"),
    ("stats.probes", "histogram points [[x, z], ...] (m)"),
    ("stats.profile_x_m", "lateral positions of std profiles (m)"),
    (
        "stats.histogram_bins, stats.prior_samples",
        "histogram resolution and prior sample count",
    ),
    (
        "seeds.data, seeds.latent, seeds.chain",
        "noise/encoding, latent input, chain seeds",
    ),
];

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Smoke => Self::smoke(),
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// 20 x 30 grid, 200 SGLD iterations.
    pub fn smoke() -> Self {
        let grid = GridSection {
            nz: 20,
            nx: 30,
            spacing_m: 25.0,
            duration_s: 0.6,
            cfl_safety: 0.9,
            sponge_width: 20,
            sponge_damping: 0.007,
        };
        Self {
            preset: Some(Preset::Smoke),
            toy: ToySection {
                smoothing_cells: Some(3.0),
                ..Default::default()
            },
            acquisition: AcquisitionSpec {
                n_sources: 4,
                n_receivers: 30,
                source_depth_m: 20.0,
                receiver_depth_m: 20.0,
                f0: 8.0,
                t0: 0.15,
            },
            data: DataSection {
                noise_variance: 2.0,
                target_snr_db: Some(-11.37),
                source_amplitude: 1.0,
                linear: false,
                n_encodings: 4,
                redraw_encodings: false,
            },
            network: NetworkSection::default(),
            mle: MleSection {
                max_iterations: 100,
                early_stopping: true,
                step: None,
            },
            map: MapSection {
                step: 5e-8,
                iterations: 50,
            },
            sgld: SgldSection {
                epsilon: 1e-7,
                lambda: 20.0,
                total_iterations: 200,
                burn_in: 100,
                thin_every: 10,
                decay_k0: None,
            },
            stats: StatsSection {
                probes: vec![[200.0, 175.0], [550.0, 350.0]],
                profile_x_m: vec![200.0, 550.0],
                histogram_bins: 10,
                prior_samples: 50,
            },
            seeds: Seeds::all(0),
            output_dir: default_out(),
            grid,
        }
    }

    /// 40 x 64 grid at 25 m, 16 shots, 16 fixed encodings, 6000 SGLD updates.
    pub fn desk() -> Self {
        Self {
            preset: Some(Preset::Desk),
            grid: GridSection {
                nz: 40,
                nx: 64,
                spacing_m: 25.0,
                duration_s: 1.2,
                cfl_safety: 0.9,
                sponge_width: 20,
                sponge_damping: 0.007,
            },
            toy: ToySection {
                smoothing_cells: Some(4.0),
                ..Default::default()
            },
            acquisition: AcquisitionSpec {
                n_sources: 16,
                n_receivers: 64,
                source_depth_m: 20.0,
                receiver_depth_m: 20.0,
                f0: 8.0,
                t0: 0.15,
            },
            data: DataSection {
                noise_variance: 2.0,
                target_snr_db: Some(-11.37),
                source_amplitude: 1.0,
                linear: false,
                n_encodings: 16,
                redraw_encodings: false,
            },
            network: NetworkSection::default(),
            mle: MleSection {
                max_iterations: 3000,
                early_stopping: true,
                step: None,
            },
            map: MapSection {
                step: 5e-8,
                iterations: 1500,
            },
            sgld: SgldSection {
                epsilon: 1e-7,
                lambda: 20.0,
                total_iterations: 6000,
                burn_in: 1800,
                thin_every: 30,
                decay_k0: None,
            },
            stats: StatsSection {
                probes: vec![[400.0, 350.0], [1200.0, 525.0]],
                profile_x_m: vec![400.0, 800.0, 1200.0],
                histogram_bins: 20,
                prior_samples: 1000,
            },
            seeds: Seeds::all(0),
            output_dir: default_out(),
        }
    }

    /// Desk problem with the 10000 / 3000 / 50 schedule, `lambda = 170` and
    /// `eps = 0.002`.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.preset = Some(Preset::Paper);
        c.sgld = SgldSection {
            epsilon: 0.002,
            lambda: 170.0,
            total_iterations: 10_000,
            burn_in: 3_000,
            thin_every: 50,
            decay_k0: None,
        };
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds::all(seed);
        self
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn toy_spec(&self, grid: &Grid) -> ToySpec {
        let mut s = default_toy_spec(grid);
        let t = &self.toy;
        if let Some(v) = &t.velocities {
            s.velocities = v.clone();
        }
        if let Some(v) = &t.interface_depths_m {
            s.interface_depths_m = v.clone();
        }
        s.fault_x_m = t.fault_x_m.unwrap_or(s.fault_x_m);
        s.fault_dip_deg = t.fault_dip_deg.unwrap_or(s.fault_dip_deg);
        s.fault_offset_m = t.fault_offset_m.unwrap_or(s.fault_offset_m);
        s.smoothing_cells = t.smoothing_cells.unwrap_or(s.smoothing_cells);
        s
    }

    /// Grid with `dt` at `cfl_safety` of the stable step for the fastest layer.
    pub fn build_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let probe = Grid::new(g.nz, g.nx, g.spacing_m, g.spacing_m, 2, 1e-3)?;
        let v_max = self
            .toy_spec(&probe)
            .velocities
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .min(MAX_VELOCITY);
        let dt = Grid::stable_dt(g.spacing_m, g.spacing_m, v_max, g.cfl_safety);
        let nt = (g.duration_s / dt).ceil() as usize + 1;
        Grid::new(g.nz, g.nx, g.spacing_m, g.spacing_m, nt, dt)?.with_sponge(g.sponge_width, g.sponge_damping)
    }

    pub fn architecture(&self) -> NetworkArchitecture {
        let mut a = NetworkArchitecture::default_for(self.grid.nz, self.grid.nx);
        let n = &self.network;
        a.latent_channels = n.latent_channels.unwrap_or(a.latent_channels);
        if let Some(v) = &n.down_channels {
            a.down_channels = v.clone();
        }
        if let Some(v) = &n.up_channels {
            a.up_channels = v.clone();
        }
        if let Some(v) = &n.skip_channels {
            a.skip_channels = v.clone();
        }
        a.kernel = n.kernel.unwrap_or(a.kernel);
        if let Some(slope) = n.leaky_slope {
            a.activation = Activation::LeakyRelu { slope };
        }
        a.output_bias = n.output_bias.unwrap_or(a.output_bias);
        a.fan_in_scaling = n.fan_in_scaling.unwrap_or(a.fan_in_scaling);
        a
    }

    pub fn sgld_config(&self) -> SgldConfig {
        let s = &self.sgld;
        SgldConfig {
            epsilon: s.epsilon,
            lambda: s.lambda,
            total_iterations: s.total_iterations,
            burn_in: s.burn_in,
            thin_every: s.thin_every,
            seed: self.seeds.chain,
            decay_k0: s.decay_k0,
        }
    }

    pub fn mle_config(&self) -> MleConfig {
        let mut c = MleConfig::new(self.mle.max_iterations, self.seeds.chain);
        c.early_stopping = self.mle.early_stopping;
        c.step = self.mle.step;
        c
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            step: self.map.step,
            iterations: self.map.iterations,
            seed: self.seeds.chain,
        }
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, m: String| Err(Error::Config(format!("{key}: {m}")));
        let g = &self.grid;
        if g.nz < 4 || g.nx < 4 {
            return bad("grid", format!("need at least 4x4 nodes, got {}x{}", g.nz, g.nx));
        }
        if !(g.spacing_m > 0.0 && g.spacing_m.is_finite()) {
            return bad("grid.spacing_m", format!("must be positive, got {}", g.spacing_m));
        }
        if !(g.duration_s > 0.0 && g.duration_s.is_finite()) {
            return bad("grid.duration_s", format!("must be positive, got {}", g.duration_s));
        }
        if !(g.cfl_safety > 0.0 && g.cfl_safety <= 1.0) {
            return bad("grid.cfl_safety", format!("must lie in (0, 1], got {}", g.cfl_safety));
        }
        if !(g.sponge_damping >= 0.0 && g.sponge_damping.is_finite()) {
            return bad("grid.sponge_damping", format!("must be >= 0, got {}", g.sponge_damping));
        }
        let grid = self.build_grid()?;
        self.toy_spec(&grid).validate()?;
        self.acquisition.build(&grid)?;
        let d = &self.data;
        if !(d.noise_variance >= 0.0 && d.noise_variance.is_finite()) {
            return bad("data.noise_variance", format!("must be >= 0, got {}", d.noise_variance));
        }
        if let Some(t) = d.target_snr_db {
            if !t.is_finite() {
                return bad("data.target_snr_db", "must be finite".into());
            }
            if d.noise_variance == 0.0 {
                return bad("data.target_snr_db", "needs a positive noise variance".into());
            }
        }
        if !(d.source_amplitude > 0.0 && d.source_amplitude.is_finite()) {
            return bad(
                "data.source_amplitude",
                format!("must be positive, got {}", d.source_amplitude),
            );
        }
        if d.n_encodings == 0 {
            return bad("data.n_encodings", "must be at least 1".into());
        }
        self.architecture().validate()?;
        if self.mle.max_iterations == 0 {
            return bad("mle.max_iterations", "must be at least 1".into());
        }
        if let Some(s) = self.mle.step {
            if !(s > 0.0 && s.is_finite()) {
                return bad("mle.step", format!("must be positive, got {s}"));
            }
        }
        if !(self.map.step > 0.0 && self.map.step.is_finite()) {
            return bad("map.step", format!("must be positive, got {}", self.map.step));
        }
        self.sgld_config().validate()?;
        if self.sgld_config().ensemble_size() < 2 {
            return bad("sgld", "schedule keeps fewer than two samples".into());
        }
        let s = &self.stats;
        if s.histogram_bins < 2 {
            return bad(
                "stats.histogram_bins",
                format!("must be at least 2, got {}", s.histogram_bins),
            );
        }
        if s.prior_samples < 2 {
            return bad(
                "stats.prior_samples",
                format!("must be at least 2, got {}", s.prior_samples),
            );
        }
        for &[x, z] in &s.probes {
            if !grid.contains(x, z) {
                return bad("stats.probes", format!("point ({x}, {z}) lies outside the grid"));
            }
        }
        for &x in &s.profile_x_m {
            if !grid.contains(x, 0.0) {
                return bad("stats.profile_x_m", format!("x = {x} lies outside the grid"));
            }
        }
        if self.output_dir.is_empty() {
            return bad("output_dir", "must not be empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Smoke, Preset::Desk, Preset::Paper] {
            let c = ExperimentConfig::preset(p);
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn paper_preset_keeps_140() {
        assert_eq!(ExperimentConfig::paper().sgld_config().ensemble_size(), 140);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut t = ExperimentConfig::smoke().to_toml().unwrap();
        t = t.replace("[sgld]\n", "[sgld]\nstep = 1.0\n");
        let e = ExperimentConfig::from_toml(&t).unwrap_err().to_string();
        assert!(e.contains("step"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::smoke();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed(1).hash());
    }

    #[test]
    fn invalid_values_name_the_key() {
        let mut c = ExperimentConfig::smoke();
        c.data.n_encodings = 0;
        assert!(c.validate().unwrap_err().to_string().contains("data.n_encodings"));
        let mut c = ExperimentConfig::smoke();
        c.stats.probes.push([1e6, 0.0]);
        assert!(c.validate().unwrap_err().to_string().contains("stats.probes"));
        let mut c = ExperimentConfig::smoke();
        c.grid.cfl_safety = 1.5;
        assert!(c.validate().unwrap_err().to_string().contains("grid.cfl_safety"));
    }
}
