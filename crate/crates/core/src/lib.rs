//! Interacting Bouchaud trap models in heavy-tailed random environments.
//!
//! The crate bundles everything needed to check hydrodynamic behaviour of the
//! partial-exclusion system of trap walkers at desk scale:
//!
//! - [`environment`]: integer heavy-tailed trap depths, rescaled atomic
//!   measures and the truncated limiting Poisson measure.
//! - [`walker`]: the single trap walker, its constant-speed conductance chain
//!   with clock, and the rescaled one-particle semigroup.
//! - [`exclusion`]: exact Gillespie simulation of the interacting system.
//! - [`duality`]: finite-state generators and the self-duality oracles.
//! - [`fields`]: density and frequency fields and the fluctuation
//!   decomposition.
//! - [`fractional`]: Mittag-Leffler function, stable subordinators,
//!   Caputo-L1 solver and the speed-measure chain for the one-dimensional
//!   quasi-diffusion.
//! - [`harness`]: experiment configs, reproducible runs and reports.

pub mod duality;
pub mod environment;
pub mod error;
pub mod exclusion;
pub mod fields;
pub mod fractional;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod numeric;
pub mod profile;
pub mod rng;
pub mod stats;
pub mod walker;

pub use environment::{Environment, PointMeasure, TailLaw, TestFunction};
pub use error::{Error, Result};
pub use lattice::Geometry;
pub use profile::Profile;
