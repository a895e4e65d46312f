//! Crate-wide error type.

use thiserror::Error;

use crate::train::TrainLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty observation set")]
    EmptyObservations,

    #[error("inconsistent observation set: {0}")]
    InvalidObservations(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("radial-wave field is singular at r = {r:.3e} (must be >= {min:.0e})")]
    RadialSingularity { r: f64, min: f64 },

    #[error("ground-truth RMSE is zero; relative error is undefined")]
    ZeroGroundTruthNorm,

    #[error("metric inputs must be nonempty and of equal length ({0})")]
    MetricShape(String),

    #[error("frequency has xi1 = {xi1:.3e}; |xi1| >= {min:.0e} is required")]
    DegenerateFrequency { xi1: f64, min: f64 },

    #[error("zero spatial frequency is not liftable into a multiplier basis")]
    ZeroFrequency,

    #[error("P(xi) is numerically rank-deficient at xi = {xi:?}")]
    RankDeficient { xi: [f64; 3] },

    #[error(
        "amplitude is not divergence-free: ||R(xi)·a|| = {residual:.3e} exceeds tolerance {tol:.1e}"
    )]
    AmplitudeNotInKernel { residual: f64, tol: f64 },

    /// Training diverged. Carries the log collected so far so callers can
    /// still persist a diagnostic record.
    #[error("non-finite loss {loss} at step {step} (epoch {epoch})")]
    NonFiniteLoss {
        step: u64,
        epoch: u64,
        loss: f64,
        log: Box<TrainLog>,
    },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("checkpoint schema version {found} is unsupported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
