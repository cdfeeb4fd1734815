//! Spherically symmetric self-dual SU(2) Yang-Mills fields on the Euclidean
//! Schwarzschild background.
//!
//! The whole configuration is described by one radial profile `phi(r)`
//! obeying
//!
//! ```text
//! (r/2)(r - 2m) phi'' + (r - 2m) phi' - phi + r^2 phi' phi = 0,
//! ```
//!
//! with `alpha^2 = 1 - r^2 phi'`. The crate builds the horizon series,
//! integrates outward, classifies the result, evaluates the globally
//! convergent series in the compactified variable `omega = 1 - 2m/r`, and
//! computes the action and Abelian charges.

pub mod error;
pub mod frobenius;
pub mod io;
pub mod mapping;
pub mod observables;
pub mod params;
pub mod profile;
pub mod properties;
pub mod rk;
mod stats;

pub use error::{Result, SolverError};
pub use frobenius::{closed_form, derive_horizon_series, eval_series, ClosedForm, ClosedFormKind, HorizonSeries};
pub use params::{rescale_profile, ClassTag, FamilyParams, PhysParams, SolutionClass};
pub use profile::{alpha_of, fit_asymptotics, integrate_phi, seed_initial_conditions, AsymptoticFit, PhiIntegrator, PointState, RadialProfile};
pub use mapping::{coefficient_diagnostics, eval_mapped, mapping_coefficients, omega_of_s, s_of_omega, MapParams, MappedSeries};
pub use observables::{action_boundary, action_bracket, action_volume, charges, lagrangian_density, observe, ObservableReport};
pub use properties::{check_alpha_reality, check_closed_form_reduction, check_ordering, classify_family, run_suite, PropertyReport, SuiteConfig};
