//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset loading, model construction, training and the
/// simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("empty dataset: manifest {0} lists no subjects")]
    EmptyDataset(String),

    #[error("subject {subject}: {path}:{line}: {message}")]
    MalformedMatrix {
        subject: String,
        path: String,
        line: usize,
        message: String,
    },

    #[error("manifest {path}:{line}: {message}")]
    MalformedManifest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("subject {subject}: non-finite value at roi {roi}, feature {feature}")]
    NonFiniteEntry {
        subject: String,
        roi: String,
        feature: String,
    },

    #[error("subject {subject}: shape {got_rows}x{got_cols} does not match dataset shape {want_rows}x{want_cols}")]
    ShapeMismatch {
        subject: String,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },

    #[error("duplicate subject_id {0}")]
    DuplicateSubject(String),

    #[error("subject {subject}: roi order differs from first subject at row {row} ({got} vs {want})")]
    RoiOrderMismatch {
        subject: String,
        row: usize,
        got: String,
        want: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),

    #[error("infinite divergence: p has mass where q is zero (index {0})")]
    InfiniteDivergence(usize),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("non-finite activation in {layer}")]
    NonFiniteActivation { layer: String },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("label/task mismatch: {0}")]
    LabelTaskMismatch(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
