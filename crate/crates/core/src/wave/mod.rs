//! 2D constant-density acoustic modeling: nonlinear propagation, the Born
//! operator and its exact discrete adjoint.

mod born;
mod geometry;
mod grid;
mod model;
mod propagator;
mod wavelet;

pub use born::{
    adjoint_mismatch, born_adjoint, born_forward, dot_product_test, solve_forward, solve_forward_record, BornModeler,
};
pub use geometry::{AcquisitionGeometry, ShotRecord, SourceSignature, Wavefield};
pub use grid::{Grid, CFL_LIMIT, DEFAULT_SPONGE_DAMPING, DEFAULT_SPONGE_WIDTH};
pub use model::{squared_slowness, velocity, ModelPerturbation, SquaredSlownessModel, MAX_VELOCITY, MIN_VELOCITY};
pub use propagator::{PointWeights, Propagator};
pub use wavelet::ricker_wavelet;
