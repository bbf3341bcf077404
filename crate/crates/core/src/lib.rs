//! Task-agnostic data valuation through second moments.
//!
//! A buyer holding a baseline dataset asks how much a seller's dataset would
//! add. The buyer's covariance is decomposed into principal components; the
//! seller reports its variance along each component; the two spectra are
//! compared component by component into a *diversity* score (how much the
//! variances differ) and a *relevance* score (how much they overlap), both in
//! `[0, 1]` with `diversity + relevance ≤ 1`.
//!
//! * [`linalg`]: centering, covariance, Jacobi eigendecomposition, projected
//!   variance.
//! * [`valuation`]: the estimators, component selection, weights and the
//!   combined value.
//! * [`protocol`]: the buyer / seller / broker exchange, in-process and over
//!   newline-delimited JSON on TCP.
//! * [`datasets`]: seeded Gaussian synthesis, noise, CSV tables, predicates
//!   and categorical encoding.

pub mod datasets;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod valuation;

pub use error::{Error, Result};
pub use linalg::{DataMatrix, EigenSpectrum};
pub use valuation::{valuate, valuate_covariances, ValuationConfig, ValuationReport};
