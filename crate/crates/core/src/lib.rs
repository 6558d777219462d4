//! Multichannel speech-enhancement toolkit built around adaptive
//! minimum-variance beamformers with sparsity-aware noise covariance
//! weighting.
//!
//! The crate is organized along the processing chain:
//!
//! * [`stft`]: multichannel time-frequency analysis/synthesis and WAV I/O.
//! * [`cxlinalg`]: small complex Hermitian matrices, plain and per-frame
//!   weighted covariance accumulation, regularized linear solves.
//! * [`beamformers`]: MPDR/MLDR/oracle-MVDR weights and the iteratively
//!   reweighted beamformer with a tunable shape parameter `p`.
//! * [`roomsim`]: image-method room impulse responses and scenario
//!   rendering with exact SINR calibration.
//! * [`metrics`]: SI-SDR, output-SINR improvement, the p-dependent
//!   noise-dominance ratio, and evaluation report serialization.

pub mod beamformers;
pub mod cxlinalg;
mod error;
pub mod metrics;
pub mod roomsim;
pub mod stft;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
