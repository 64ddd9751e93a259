use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::wave::{AcquisitionGeometry, BornModeler, Grid, ShotRecord, SourceSignature, SquaredSlownessModel};

/// One (possibly simultaneous) source experiment: observed record `d_i` and
/// the sources fired together.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub observed: ShotRecord,
    pub sources: Vec<SourceSignature>,
}

/// Observed experiments on a shared grid and receiver line, with the
/// background model and the noise variance of the likelihood.
///
/// Born modelers (and with them the background synthetics) are built lazily
/// per experiment and cached.
pub struct Dataset {
    m0: SquaredSlownessModel,
    receivers: Vec<(f64, f64)>,
    experiments: Vec<Experiment>,
    sigma2: f64,
    modelers: Vec<OnceLock<BornModeler>>,
    residuals: Vec<OnceLock<ShotRecord>>,
}

impl Dataset {
    pub fn new(
        m0: SquaredSlownessModel,
        receivers: Vec<(f64, f64)>,
        experiments: Vec<Experiment>,
        sigma2: f64,
    ) -> Result<Self> {
        if experiments.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one experiment".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        let grid = *m0.grid();
        AcquisitionGeometry::new(receivers.clone(), Vec::new()).validate(&grid)?;
        for (i, e) in experiments.iter().enumerate() {
            e.observed
                .check_dims(grid.nt, receivers.len())
                .map_err(|err| Error::InvalidArgument(format!("experiment {i}: {err}")))?;
            for s in &e.sources {
                s.check(&grid)?;
            }
        }
        let n = experiments.len();
        Ok(Self {
            m0,
            receivers,
            experiments,
            sigma2,
            modelers: (0..n).map(|_| OnceLock::new()).collect(),
            residuals: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.m0.grid()
    }

    pub fn m0(&self) -> &SquaredSlownessModel {
        &self.m0
    }

    pub fn receivers(&self) -> &[(f64, f64)] {
        &self.receivers
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    /// `N`.
    pub fn n(&self) -> usize {
        self.experiments.len()
    }

    /// `D`, samples per record.
    pub fn d(&self) -> usize {
        self.grid().nt * self.receivers.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn set_sigma2(&mut self, sigma2: f64) -> Result<()> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        self.sigma2 = sigma2;
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "experiment index {i} out of range for {} experiments",
                self.n()
            )));
        }
        Ok(())
    }

    /// Born modeler about `m0` for experiment `i`.
    pub fn modeler(&self, i: usize) -> Result<&BornModeler> {
        self.check_index(i)?;
        if let Some(m) = self.modelers[i].get() {
            return Ok(m);
        }
        let geom = AcquisitionGeometry::new(self.receivers.clone(), self.experiments[i].sources.clone());
        let built = BornModeler::new(&self.m0, &self.experiments[i].sources, &geom)?;
        Ok(self.modelers[i].get_or_init(|| built))
    }

    /// `dd_i = d_i - P A(m0)^-1 q_i`.
    pub fn residual(&self, i: usize) -> Result<&ShotRecord> {
        self.check_index(i)?;
        if let Some(r) = self.residuals[i].get() {
            return Ok(r);
        }
        let r = self.experiments[i].observed.minus(self.modeler(i)?.background())?;
        Ok(self.residuals[i].get_or_init(|| r))
    }

    /// Builds every modeler and residual up front.
    pub fn prepare(&self) -> Result<()> {
        for i in 0..self.n() {
            self.residual(i)?;
        }
        Ok(())
    }
}

/// Data residual of experiment `i` (0-based).
pub fn data_residual(dataset: &Dataset, i: usize) -> Result<&ShotRecord> {
    dataset.residual(i)
}
