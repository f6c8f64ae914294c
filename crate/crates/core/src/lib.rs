//! Ridge regression tuned by leave-one-out cross-validation, and how much
//! each observation moves the selected penalty.
//!
//! The entry points are [`RidgeSpectrum::decompose`], [`minimize_cv`],
//! [`WeightedSolver`] for per-observation influence curves and
//! [`influence_derivatives`] for their slopes at the unweighted optimum.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod influence;
pub mod io;
pub mod loocv;
pub mod plot;
pub mod search;
pub mod simgen;
pub mod spectrum;
pub mod weighted;

pub use dataset::{standardize, RawDataset, StandardizeOptions, StandardizedDataset};
pub use error::{Error, Result};
pub use influence::{
    classify, error_derivatives, influence_derivatives, weight_derivative, univariate_sign_analysis,
    ErrorDerivatives, InfluenceLabel, InfluenceReport,
};
pub use loocv::{cv_value, effective_df, evaluate, minimize_cv, CvCurve, LooTable, RidgeEvaluation};
pub use search::{Boundary, Minimum, SolverOptions};
pub use spectrum::{InterceptMode, Outcome, RidgeSpectrum, DEFAULT_RANK_TOLERANCE};
pub use weighted::{weighted_cv_value, CurveFlag, InfluenceCurve, WeightGrid, WeightedSolver};
