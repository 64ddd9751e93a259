//! Experiment orchestration: toy models, data simulation, source encoding,
//! configuration, file formats and the end-to-end pipeline.

mod checksum;
mod config;
mod io;
mod pipeline;
mod simulate;
mod toy;

pub use checksum::{sha256_f64, sha256_hex};
pub use config::{
    DataSection, ExperimentConfig, GridSection, MapSection, MleSection, NetworkSection, Preset, Seeds, SgldSection,
    StatsSection, ToySection, CONFIG_KEYS,
};
pub use io::{header_path, read_array, write_array, write_csv, write_pgm, write_pgm_positive, ArrayHeader};
pub use pipeline::{
    build_toy, clip_of, load_ensemble, prepare, prior_for, run_experiment, run_experiment_in, stage, summarize,
    write_encoding, write_inputs, write_manifest, write_simulation, write_summary, Manifest, MleReport, Outputs,
    Prepared, ProbeReport, Summary, Timings,
};
pub use simulate::{
    calibrate_amplitude, encode_simultaneous, encode_with_weights, encoded_noise_factor, estimate_sigma2,
    simulate_data, AcquisitionSpec, RedrawEncodedPosterior, SimulatedData,
};
pub use toy::{default_toy_spec, gaussian_smooth, make_toy_model, ToyModel, ToySpec};
