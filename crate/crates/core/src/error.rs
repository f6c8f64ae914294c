use thiserror::Error;

use crate::search::Boundary;

/// Everything that can go wrong between ingestion and the influence report.
///
/// Observation and column indices carried by the variants are 0-based; the
/// `Display` impls print them 1-based to match the labels used in outputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no data rows")]
    EmptyInput,

    #[error("need at least 3 observations, found {0}")]
    TooFewObservations(usize),

    #[error("non-finite value at observation {}, column {}", .row + 1, .col + 1)]
    NonFinite { row: usize, col: usize },

    #[error("non-finite outcome at observation {}", .0 + 1)]
    NonFiniteOutcome(usize),

    #[error("column {} ({name}) has zero variance", .index + 1)]
    ConstantColumn { index: usize, name: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("column selector `{0}` does not match any column")]
    UnknownColumn(String),

    #[error("singular value decomposition did not converge")]
    DecompositionFailure,

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("penalty must be non-negative, got {0}")]
    NegativeLambda(f64),

    #[error("leverage of observation {} is numerically one; closed-form LOOCV undefined", .0 + 1)]
    LeverageOne(usize),

    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),

    #[error("sum of second derivatives is {0}, not a minimum")]
    NotAMinimum(f64),

    #[error("minimizer lies on the search boundary ({0}); the analytic derivative does not apply")]
    BoundaryMinimizer(Boundary),

    #[error("univariate analysis requires exactly one covariate, found {0}")]
    NotUnivariate(usize),

    #[error("univariate analysis requires {0}")]
    NotNormalized(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for problems with the user's input (files, selectors, flags), as
    /// opposed to failures inside the numerical pipeline.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::DecompositionFailure
                | Error::LeverageOne(_)
                | Error::NotAMinimum(_)
                | Error::BoundaryMinimizer(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
