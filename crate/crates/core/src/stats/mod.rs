//! Posterior summaries: model averaging, pointwise spread, depth profiles,
//! point histograms and data SNR.

mod ensemble;
mod welford;

pub use ensemble::{
    bma_mean, nearest_cell, percentile, point_histogram, pointwise_std, snr, std_localization, std_profiles,
    ChainMetadata, Histogram, PosteriorEnsemble, StdLocalization, StdProfile,
};
pub use welford::Welford;
