//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by tensor math, network construction, and the training
/// engines.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape for {op}: {details}")]
    InvalidShape { op: &'static str, details: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {num_classes} classes (sample {sample})")]
    LabelOutOfRange {
        label: usize,
        num_classes: usize,
        sample: usize,
    },

    #[error("non-finite {what} in module {module} at iteration {iteration}; training aborted")]
    NonFinite {
        what: &'static str,
        module: usize,
        iteration: u64,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
