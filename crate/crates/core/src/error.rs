//! Crate-wide error type.

use thiserror::Error;

use crate::scenario::ConfigReport;

/// Errors surfaced by the simulation and optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigReport),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("degenerate geometry: target coincides with BS {bs}")]
    DegenerateGeometry { bs: usize },

    #[error("no spectral peak: input grid is all zero")]
    NoPeak,

    #[error("beam null at BS {bs}: divisor below floor at subcarrier {k}, symbol {l}")]
    BeamNull { bs: usize, k: usize, l: usize },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("numerically degenerate information matrix")]
    DegenerateInformation,

    #[error("position unidentifiable: Schur complement not positive definite (min eigenvalue {min_eig:e})")]
    Unidentifiable { min_eig: f64 },

    #[error("beamforming problem infeasible for threshold {eta:e}")]
    Infeasible { eta: f64 },

    #[error("rank-one recovery produced no feasible candidate")]
    RankRecoveryFailure,

    #[error("conic solver failure: {0}")]
    Solver(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
