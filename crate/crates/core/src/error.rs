use thiserror::Error;

/// Errors raised by the numerical routines and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {n} exceeds the limit {limit} for {what}")]
    DimensionLimit {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },

    #[error("det(I + αΓ) = {det} is not positive")]
    NonPositiveDeterminant { det: f64 },

    #[error("I + rΓ is singular at r = {r} (det = {det}, condition = {cond:e})")]
    SingularResolvent { r: f64, det: f64, cond: f64 },

    #[error("negative radicand {value} for pair ({i}, {j})")]
    NegativeRadicand { i: usize, j: usize, value: f64 },

    #[error("negative product Γ(i,j)Γ(j,i) = {value} for pair ({i}, {j})")]
    NegativeProduct { i: usize, j: usize, value: f64 },

    #[error("kernel is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("kernel is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("quadrature did not converge: estimated error {error:e} > tolerance {tolerance:e}")]
    QuadratureNonConvergence { error: f64, tolerance: f64 },

    #[error(
        "finite-difference step {step:e} too small for order {order}: rounding bound {bound:e}"
    )]
    StepTooSmall { step: f64, order: usize, bound: f64 },

    #[error("log-det series diverges: spectral radius {radius} >= 1")]
    SeriesDivergence { radius: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
