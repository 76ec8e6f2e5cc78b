use thiserror::Error;

use crate::params::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("singular pivot at row {row} (value {pivot:e})")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("linear solver did not converge; residual history {residuals:?}")]
    SolverBreakdown { residuals: Vec<f64> },

    #[error("time level {level}{}: {source}", slice_suffix(*.slice))]
    Step {
        level: usize,
        slice: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("delta = {delta}: {source}")]
    AtDelta {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, level: usize, slice: Option<usize>) -> Self {
        Error::Step {
            level,
            slice,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_delta(self, delta: f64) -> Self {
        Error::AtDelta {
            delta,
            source: Box::new(self),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

fn slice_suffix(slice: Option<usize>) -> String {
    slice.map(|j| format!(", z-slice {j}")).unwrap_or_default()
}
