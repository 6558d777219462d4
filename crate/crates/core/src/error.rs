use std::path::PathBuf;

use crate::stft::Window;

/// Unified error type for the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received an empty input where at least one element is
    /// required (no samples, no frames, no sources, ...).
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Inputs disagree on a dimension (channel counts, frame counts,
    /// vector lengths).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The window/hop pair does not overlap-add to a constant, so analysis
    /// followed by synthesis would not reconstruct the input.
    #[error("window {window:?} with hop {hop} and frame length {frame_len} does not satisfy constant overlap-add")]
    NonCola {
        window: Window,
        frame_len: usize,
        hop: usize,
    },

    /// Time-frequency metadata is internally inconsistent (bin count vs.
    /// frame length, hop vs. frame length, ...).
    #[error("inconsistent time-frequency metadata: {0}")]
    InconsistentMetadata(String),

    /// A divide-by-zero or similar hazard was detected before it could
    /// produce non-finite output.
    #[error("numeric guard: {0}")]
    NumericGuard(String),

    /// Matrix factorization failed even after diagonal loading.
    #[error("singular matrix{}", fmt_bin(*bin))]
    SingularMatrix { bin: Option<usize> },

    /// An iterative solver produced non-finite weights.
    #[error("iteration diverged at iteration {iteration}{}", fmt_bin(*bin))]
    Diverged { iteration: usize, bin: Option<usize> },

    /// The requested reverberation time cannot be realized in the given
    /// room (the implied average wall absorption exceeds 1).
    #[error("rt60 = {rt60} s is infeasible for this room: implied Sabine absorption {absorption:.3} > 1")]
    InfeasibleRt60 { rt60: f64, absorption: f64 },

    /// Source or microphone placement violates the room geometry.
    #[error("geometry: {0}")]
    Geometry(String),

    /// A scenario configuration file failed validation.
    #[error("invalid scenario {path}: {detail}")]
    InvalidScenario { path: PathBuf, detail: String },

    /// A ratio or metric is undefined for the given inputs (zero reference
    /// signal, zero noise power, no speech-active frames, ...).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Wrapper around WAV read/write failures.
    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        source: hound::Error,
    },

    /// Wrapper around filesystem failures.
    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn fmt_bin(bin: Option<usize>) -> String {
    match bin {
        Some(k) => format!(" at frequency bin {k}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a frequency-bin index to errors raised inside per-bin loops.
    pub(crate) fn with_bin(self, k: usize) -> Self {
        match self {
            Error::SingularMatrix { .. } => Error::SingularMatrix { bin: Some(k) },
            Error::Diverged { iteration, .. } => Error::Diverged {
                iteration,
                bin: Some(k),
            },
            other => other,
        }
    }
}
