//! Seeded Monte Carlo sweeps reproducing the evaluation protocols.
//!
//! A config lists the array, the spacing/`M`/SNR/bit grids and a set of
//! arms (scheme, basis, sparsity, quantizer). Trials run in parallel; every
//! random stream is derived from the base seed, so identical configs produce
//! identical tables.

pub mod config;
pub mod output;
pub mod stats;
pub mod sweep;

pub use config::{
    ArmConfig, ArrayKind, BasisChoice, ExperimentConfig, GeometryConfig, QuantizerChoice, Scheme, SweepKind,
};
pub use output::{sidecar_path, ResultRow, ResultTable};
pub use stats::{paired_difference, summarize, Summary};
pub use sweep::{
    feedback_vector, measurement_matrix, quantizer_training_set, run_mse_sweep, run_sum_rate_sweep, training_channels,
    user_aoa, user_setup, UserSetup,
};
