//! Robust functional principal component analysis for sparsely observed curves.
//!
//! The pipeline estimates the mean with local M-estimators, the diagonal of the
//! covariance with a local M-scale and the off-diagonal through local robust
//! slopes, then predicts scores by conditional location.

pub mod engine;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod robust;
pub mod selection;
pub mod simulation;
pub mod smoothers;

pub use engine::{fit, FitConfig, FpcaFit, SparseFunctionalSample, Variant};
pub use error::{FpcaError, Result};
