//! Robust penalized MT-estimation for Poisson generalized linear models.
//!
//! The crate fits bounded-loss M-estimators on a variance-stabilizing
//! transformation of the response (MT-estimators), with elastic-net style
//! penalties solved by iteratively reweighted least squares and coordinate
//! descent. It ships the surrounding machinery a study of these estimators
//! needs: a deterministic robust initializer, penalty-parameter selection by
//! information criteria and cross-validation, sandwich covariances, bootstrap
//! outlier detection, a breakdown-point bound, and a Monte Carlo harness for
//! contamination experiments.
//!
//! Module map:
//! - [`families`]: the Poisson family, its distribution primitives and the
//!   tabulated robust mean transform `s(eta)`.
//! - [`robust_loss`]: bounded rho-functions and the MT objective with
//!   gradient and Hessian.
//! - [`penalties`]: penalty values, soft-thresholding and the P1-P4
//!   classification flags.
//! - [`solver`]: the IRWLS + coordinate-descent fitting engine.
//! - [`init`]: the two-stage principal-sensitivity-components initializer.
//! - [`selection`]: lambda grids, degrees of freedom, information criteria
//!   and robust cross-validation.
//! - [`inference`]: sandwich covariance, outlier detection, breakdown bound.
//! - [`simulation`]: the AVY / AVY2 / AMR contamination experiments.
//!
//! Fits are single-threaded and deterministic; batches of independent fits
//! (replicates, folds, path points, leave-one-out refits) run through
//! [`exec`], which is backed by rayon when the `parallel` feature (default)
//! is enabled and degrades to a sequential loop otherwise. Results do not
//! depend on the thread count.

pub mod data;
pub mod error;
pub mod exec;
pub mod families;
pub mod inference;
pub mod init;
pub mod penalties;
pub mod robust_loss;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use data::Dataset;
pub use error::MtError;
pub use families::{GlmFamily, MFunctionTable, Poisson};
pub use penalties::{PenaltyKind, PenaltySpec};
pub use robust_loss::{MtObjective, RhoFunction, RhoKind};
pub use solver::{FitResult, SolverConfig};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, MtError>;
