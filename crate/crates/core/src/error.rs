use std::path::PathBuf;

use thiserror::Error;

use crate::model::State;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field `{field}` has non-finite value {value} at cell {index}")]
    NonFinite {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("field `{field}` violates {constraint} at cell {index} (value {value})")]
    Positivity {
        field: &'static str,
        constraint: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid value for `{name}`: {constraint} (got {value})")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{0}")]
    Fit(String),

    #[error("time step {dt:e} fell below dt_min {dt_min:e} at t = {t}; {}", state_summary(.state))]
    DtUnderflow {
        t: f64,
        dt: f64,
        dt_min: f64,
        state: Box<State>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("convergence study: {0}")]
    Convergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical integration itself (as opposed to
    /// bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Positivity { .. } | Error::DtUnderflow { .. }
        )
    }
}

fn state_summary(state: &State) -> String {
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:e}, {hi:e}]")
    };
    format!(
        "state dump: u {} v {} w {} z {}",
        range(state.u.values()),
        range(state.v.values()),
        range(state.w.values()),
        range(state.z.values())
    )
}
