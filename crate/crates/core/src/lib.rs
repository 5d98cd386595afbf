//! Compressed channel-state feedback for spatially correlated massive MIMO.
//!
//! The crate is organized along the feedback chain:
//!
//! * [`channel_model`]: one-ring spatial correlation for ULA/UPA arrays,
//!   Kronecker-model channel synthesis and sample covariance estimation.
//! * [`bases`]: 2D-DCT and KLT sparsifying bases, pre-ordered so that the
//!   first coefficients are the dominant ones.
//! * [`compression`]: random-projection and truncation encoders.
//! * [`reconstruction`]: OMP, modified OMP and inverse-transform decoders.
//! * [`quantization`]: LBG and random vector quantization codebooks.
//! * [`precoding_metrics`]: MMSE precoder, normalized MSE and sum rate.
//! * [`harness`]: seeded Monte Carlo sweeps producing CSV result tables.

pub mod bases;
pub mod channel_model;
pub mod compression;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod precoding_metrics;
pub mod quantization;
pub mod reconstruction;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
