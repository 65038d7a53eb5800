use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("assumption {clause} violated: margin {margin:e}")]
    AssumptionViolated { clause: &'static str, margin: f64 },

    #[error("size mismatch: expected {expected} samples, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("kernel exponent {alpha} is not integrable at the origin in dimension {dim} (need alpha < dim)")]
    SingularKernel { alpha: f64, dim: usize },

    #[error("component {component} has zero mass")]
    ZeroMass { component: usize },

    #[error("operation undefined for the zero field")]
    ZeroField,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dilation by theta = {theta} pushes a mass fraction {lost:e} outside the box; use a larger theta or a larger box")]
    ShrinkTheta { theta: f64, lost: f64 },

    #[error("no theta on the supplied grid gives negative energy (smallest tried: {smallest})")]
    NoNegativeTheta { smallest: f64 },

    #[error("input ground state is not converged")]
    Unconverged,

    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
