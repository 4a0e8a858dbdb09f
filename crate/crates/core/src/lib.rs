//! Digital self-interference cancellation for in-band full-duplex radios.
//!
//! The crate models the parallel Hammerstein (PH) canceller and its
//! orthonormal generalized-Laguerre (GLP) re-expansion, estimates canceller
//! weights by least squares from a pilot sequence, decomposes the residual
//! self-interference into truncation, bias-induced and noise-induced parts,
//! and selects pilot sequences by a Gram-spectrum criterion.

// Negated comparisons are used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod canceller;
pub mod error;
pub mod experiments;
pub mod frontend;
pub mod linalg;
pub mod pilot;
pub mod rng;
pub mod signals;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
