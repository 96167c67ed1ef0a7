//! Growth-adaptive differentially private stochastic convex optimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`], [`domain`], [`rng`], [`loss`] and [`growth`] hold the shared
//!   vocabulary: points, datasets, privacy budgets, constraint sets, seeded
//!   randomness and growth/KL verification.
//! * [`mechanisms`] calibrates and samples Laplace/Gaussian noise and provides
//!   an empirical neighbouring-dataset privacy falsifier.
//! * [`erm`] solves the strongly convex regularized ERM subproblems with a
//!   certified optimality gap.
//! * [`localization`] is the phase-based private solver with shrinking trust
//!   regions; [`epoch`] wraps it in an epoch loop that adapts to unknown growth.
//! * [`inv_sensitivity`] realizes the smoothed gradient-based inverse
//!   sensitivity mechanism on a grid for one- and two-dimensional domains.
//! * [`instances`] generates problems with certified growth and known optima.

pub mod domain;
pub mod epoch;
pub mod erm;
pub mod error;
pub mod growth;
pub mod instances;
pub mod inv_sensitivity;
pub mod localization;
pub mod loss;
pub mod mechanisms;
pub mod rng;
pub mod types;

pub use domain::Domain;
pub use error::{Error, Result};
pub use loss::{Kink, LossOracle, Objective};
pub use rng::RngStream;
pub use types::{Dataset, GrowthSpec, PrivacyParams, Vector};
