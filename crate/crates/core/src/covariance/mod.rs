//! Limit covariance, exact covariance propagation, empirical estimates and
//! statistical checks.

mod decomposition;
mod field;
mod limit;
mod normality;
mod propagate;

pub use decomposition::{DecompositionOracle, DecompositionTables};
pub use field::{empirical_covariance, CovarianceField, ErrorSummary, Provenance};
pub use limit::{c_matrix, limit_symbol_at, nn_limit_symbol, LimitCovariance};
pub use normality::{normality_test, NormalityReport, Verdict, MIN_SAMPLES};
pub use propagate::CovariancePropagator;

/// Largest slab (in sites) for dense covariance matrices.
pub const DENSE_LIMIT: usize = 4096;
