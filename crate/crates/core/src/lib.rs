//! Ground states and dynamics of `m`-component nonlinear Hartree systems
//!
//! ```text
//! -Delta phi_j + lambda_j phi_j = sum_k (W * |phi_k|^p) |phi_j|^{p-2} phi_j,   W(x) = |x|^{-alpha},
//! ```
//!
//! discretized on a periodic box with spectral derivatives. Ground states
//! minimize the energy at fixed `L2` masses; the time-dependent system is
//! propagated with Strang splitting; [`analysis`] collects the numerical
//! experiments built on both.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod hartree;
pub mod minimize;
pub mod params;

pub use analysis::{
    concentration_profile, cross_term_check, scaling_negativity_test, stability_experiment,
    strict_scaling_check, subadditivity_scan, ConcentrationProfile, ScanOptions, StabilityOptions,
    SubadditivityRecord,
};
pub use error::{Error, Result};
pub use evolve::{
    evolve, orbit_distance, EvolutionOptions, EvolutionTrace, Observer, OrbitMetric, Propagator,
};
pub use grid::{dilate, Field, Grid, MultiField, Spectral};
pub use hartree::{
    el_residual, energy_gradient, pair_interaction, single_energy, total_energy, EnergyBreakdown,
    Kernel,
};
pub use minimize::{
    extract_multipliers, ground_state, phase_factorize, project_masses, single_component_ground,
    GroundState, Init, SolverOptions,
};
pub use params::{
    derive_exponents, validate_assumptions, DerivedExponents, SystemParams, ValidationReport,
};
