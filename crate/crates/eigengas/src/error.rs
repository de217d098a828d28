//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}x{expected}, got {got}x{got2}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        got2: usize,
    },

    #[error("matrix is not symmetric (max |M - M^T| = {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },

    #[error(
        "degenerate spectrum at lambda = {lambda}: levels {level_a} and {level_b} \
         separated by {gap:.3e}"
    )]
    DegenerateSpectrum {
        lambda: f64,
        level_a: usize,
        level_b: usize,
        gap: f64,
    },

    #[error("ground state is degenerate (gap to first excited state = {gap:.3e})")]
    DegenerateGroundState { gap: f64 },

    #[error("bias preset requires the problem Hamiltonian to be supplied")]
    MissingBiasReference,

    #[error("integration aborted at lambda = {lambda:.6}: {detail}")]
    IntegrationAbort { lambda: f64, detail: String },

    #[error("traces sampled on different grids ({a} vs {b} points)")]
    GridMismatch { a: usize, b: usize },

    #[error("state has zero weight on the final-step dots; readout is undefined")]
    EmptyReadout,

    #[error("curve is not monotone at segment {index}: {detail}")]
    MonotonicityViolation { index: usize, detail: String },

    #[error(
        "only {in_band} points with success in [{p_min}, {p_max}]; at least {needed} required"
    )]
    FitBand {
        in_band: usize,
        needed: usize,
        p_min: f64,
        p_max: f64,
    },

    #[error("{failed} of {total} realizations failed; ensemble rejected")]
    EnsembleFailed { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
