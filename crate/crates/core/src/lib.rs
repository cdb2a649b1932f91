//! Generalized Wigner matrices and the log-correlated field of their
//! characteristic polynomials.
//!
//! The crate is organised around the objects one needs to test the
//! log-correlated central limit theorem numerically:
//!
//! * [`ensemble`] samples generalized Wigner / Wigner-type matrices from a
//!   [`ensemble::VarianceProfile`] and an [`ensemble::EntryLaw`];
//! * [`tridiag`] holds the exact tridiagonal models of GOE/GUE, which give
//!   `O(n)` access to `log det(z - H)` and eigenvalue counts;
//! * [`spectral`] has the semicircle quantities, the centred
//!   log-characteristic polynomial `L_N`, quantiles and the advection
//!   characteristics;
//! * [`dbm`] integrates Dyson Brownian motion, coupled flows and the tangent
//!   kernel `u_k`;
//! * [`qve`] solves the quadratic vector equation and its stability operators;
//! * [`clt`] evaluates the analytic variance / expectation predictions;
//! * [`experiments`] turns the limit theorems into seeded Monte Carlo runs;
//! * [`cli`] is the command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod clt;
pub mod dbm;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod quad;
pub mod qve;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod tridiag;

pub use error::{Error, Result};
pub use num_complex::Complex64;
