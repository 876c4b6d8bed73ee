//! Numerics for permanental processes.
//!
//! A β-permanental vector θ = (θ₁, …, θₙ) is a non-negative random vector whose
//! Laplace transform is
//!
//! ```text
//! E exp(-½ Σ αᵢ θᵢ) = det(I + diag(α) Γ)^(-β)
//! ```
//!
//! for a kernel matrix Γ that need be neither symmetric nor positive definite.
//! This crate provides:
//!
//! - [`permanent`]: β-permanents (brute force and a subset DP), multi-index
//!   expansions, Laplace transforms and moments.
//! - [`existence`]: necessary conditions, the truncated Vere-Jones criterion,
//!   the M-matrix certificate and an infinite-divisibility series test, combined
//!   into an [`existence::ExistenceReport`].
//! - [`metric`]: the permanental distance, triangle checks and entropy integrals.
//! - [`levy`]: potential densities of Lévy processes by quadrature, plus the
//!   closed-form FBMQ family.
//! - [`sampler`]: Gaussian-square, gamma and bivariate samplers with Monte Carlo
//!   Laplace-transform verification.
//! - [`cli`]: the `permanental` command-line driver.
//!
//! ```
//! use permanental::matrix::SquareMatrix;
//! use permanental::permanent::{beta_permanent_dp, BetaOrder};
//!
//! let b = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
//! let beta = BetaOrder::new(0.5).unwrap();
//! // β²·a·d + β·b·c
//! let p = beta_permanent_dp(&b, beta).unwrap();
//! assert!((p - (0.25 * 4.0 + 0.5 * 6.0)).abs() < 1e-12);
//! ```

#![forbid(unsafe_code)]

pub mod cli;
pub mod error;
pub mod existence;
pub mod fixtures;
pub mod levy;
pub mod matrix;
pub mod metric;
pub mod numeric;
pub mod permanent;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use matrix::{KernelMatrix, SquareMatrix};
pub use permanent::{BetaOrder, MultiIndex};
