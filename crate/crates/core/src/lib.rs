//! Generalized additive partial linear models.
//!
//! The link-transformed mean is modelled as a sum of smooth univariate
//! functions of the covariates `x` plus a linear form in `z`. Smooth parts are
//! approximated by centered B-splines, the joint quasi-likelihood is
//! maximized by Fisher scoring, and the linear part can be reduced by SCAD,
//! LASSO or best-subset BIC selection. [`sim`] holds the Monte Carlo harness
//! used to study the selectors.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod data;
pub mod error;
pub mod family;
pub mod fit;
pub mod ingest;
mod linalg;
pub mod report;
pub mod select;
pub mod sim;
pub mod spline;

pub use data::Dataset;
pub use error::{GaplmError, Result};
pub use family::{FamilyKind, Link, QuasiFamily, VarianceFn};
pub use fit::{beta_covariance, component, design_matrix, fit, predict, FitOptions, GaplmFit, Prediction, Scale};
pub use ingest::{ingest_csv, Ingested, ModelSpec};
pub use select::{
    best_subset_bic, default_lambda_grid, fit_penalized, sandwich_covariance, sandwich_se, tune_lambda, tune_lambda_from, Penalty,
    PenaltyKind, ScoreCovariance, SelectOptions, SelectionResult,
};
pub use sim::{run_monte_carlo, Method, Scenario, SimConfig, SimSummary};
pub use spline::{make_knots, AdditiveSplineBasis, KnotPlacement, KnotVector};
