//! Estimation of a scalar parameter from repeated observations of an
//! inhomogeneous Poisson process, under regular and non-regular asymptotics.
//!
//! The crate is organized bottom-up:
//!
//! - [`intensity`]: the catalog of parametric intensity families.
//! - [`analysis`]: quadrature and deterministic functionals (Fisher-type
//!   informations, Hellinger and Kullback–Leibler distances).
//! - [`simulate`]: thinning simulation of trajectories and samples.
//! - [`likelihood`]: log-likelihood and the normalized likelihood ratio.
//! - [`estimators`]: maximum likelihood, Bayes, moments and two-stage
//!   windowed estimators.
//! - [`limits`]: limit-law parameters and samplers for each regime.
//! - [`windows`]: optimal and sufficient observation windows.
//! - [`experiments`]: the Monte Carlo harness.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod intensity;
pub mod likelihood;
pub mod limits;
mod par;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod windows;

pub use error::{Error, Result};
pub use intensity::{CatalogId, IntensityModel, ParameterInterval, Side, TrueIntensity};
pub use rng::RngStream;
pub use simulate::{Sample, Trajectory};
pub use windows::Window;
