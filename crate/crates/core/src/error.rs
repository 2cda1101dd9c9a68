use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite (leading minor {minor} of {dim} is not positive)")]
    NotPositiveDefinite { minor: usize, dim: usize },

    #[error("matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("numerical failure in {context}: {detail}; consider adding diagonal jitter to the prior or noise covariance")]
    Numerical {
        context: &'static str,
        detail: String,
    },

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("unknown arm {0}")]
    UnknownArm(String),

    #[error("arm {arm} has {count} traces; at least {needed} are required")]
    InsufficientData {
        arm: String,
        count: usize,
        needed: usize,
    },

    #[error("class {class:?} has {arms} arms; at least {needed} are required")]
    InsufficientArms {
        class: String,
        arms: usize,
        needed: usize,
    },

    #[error("rounding infeasible: residual probability {residual} for the argmax arm is negative (m = {m} is too small for {arms} arms)")]
    RoundingInfeasible { residual: f64, m: usize, arms: usize },

    #[error("reservoir exhausted: no arm left to introduce at batch {t}")]
    ReservoirExhausted { t: usize },

    #[error("unknown preset {name:?}; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("unknown policy {name:?}; valid policies: {valid}")]
    UnknownPolicy { name: String, valid: String },

    #[error("invalid configuration key {key:?}: {detail}")]
    Config { key: String, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("lookahead at batch {t}: outcome {outcome} of a user assigned at batch {tau} was consumed before it was visible")]
    Lookahead { t: usize, tau: usize, outcome: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than a runtime failure.
    /// The CLI maps these to exit code 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::UnknownPreset { .. }
                | Error::UnknownPolicy { .. }
                | Error::Config { .. }
                | Error::Parse { .. }
                | Error::UnknownArm(_)
                | Error::InsufficientData { .. }
                | Error::InsufficientArms { .. }
                | Error::Dimension { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
