//! Quasi-Bayesian estimation with a Gaussian Metropolis walk.
//!
//! The crate samples posteriors and quasi-posteriors of possibly
//! non-concave, discontinuous criterion functions after localizing them
//! around a first-order estimate, plans burn-in and averaging lengths from
//! conductance bounds, and checks empirically how close a localized target
//! is to its normal limit.
//!
//! Module map:
//!
//! - [`target`]: support ball, normal reference `J`, and the localized target.
//! - [`models`] / [`dataset`]: exponential, curved-exponential and
//!   Z-estimation localizations; synthetic and CSV data.
//! - [`walk`]: the Gaussian Metropolis walk restricted to the ball.
//! - [`schedule`]: warmness, β factor and burn-in / sample-size plans.
//! - [`estimator`]: long-run, subsample and multi-start averages; MSE harness.
//! - [`diagnostics`]: CLT fit, total variation to the normal reference,
//!   autocovariances, conductance proxy, IAT and the mixing benchmark.
//! - [`isoperimetry`]: numerical iso-perimetric checks and concave envelopes.
//! - [`quadrature`]: adaptive Gauss–Kronrod integration used by the checks.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod isoperimetry;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod schedule;
pub mod target;
pub mod walk;

mod linalg;

pub use error::{Error, Result};
pub use target::{LocalTarget, NormalReference, SupportBall};

/// Default support constant `C` in `‖K‖ = C·sqrt(d/λ_min)`.
pub const DEFAULT_SUPPORT_C: f64 = 2.0;
