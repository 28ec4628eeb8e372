//! Spherical signal processing and probabilistic forecast verification.
//!
//! The crate covers grids and quadrature, spherical harmonic transforms,
//! spectral and discrete-continuous (DISCO) convolutions, resampling, a
//! spectral diffusion noise process, CRPS-based metrics and losses, a small
//! spherical neural operator, and a deterministic rank simulator for the
//! domain-decomposed versions of the transforms.

pub mod convolutions;
pub mod distsim;
pub mod error;
pub mod exec;
pub mod field;
pub mod grids;
pub mod harmonics;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod resampling;

pub use error::{Error, Result};
pub use field::{EnsembleField, SphericalField};
pub use grids::{GridKind, GridSpec};
pub use harmonics::{LegendreTable, ShtPlan, SpectralCoeffs};
