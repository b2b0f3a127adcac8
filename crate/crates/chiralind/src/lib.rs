//! Numerical toolkit for one-dimensional chiral (class AIII) tight-binding
//! chains with matrix-valued, possibly disordered hopping.
//!
//! The crate builds finite-volume chiral operators `H = [[0, S*], [S, 0]]`
//! from hopping sequences `(A_n, B_n)` and computes the topological index
//! four independent ways:
//!
//! - a bulk trace formula `N = tr(Pi Sigma [Lambda, Sigma]) / 2` and its
//!   Fermi-projection reformulation,
//! - a windowed count of edge-localized zero modes `tr(Pi Lambda P_0)`,
//! - the number of negative Lyapunov exponents of the zero-energy transfer
//!   cocycle `T_n = -A_n^{-1} B_n`,
//! - in the translation-invariant gapped case, the winding number of
//!   `z -> det S(z)` on the unit circle.
//!
//! Agreement of the integer values is the numerical signature of bulk-edge
//! correspondence; [`cli`] wires the computations into a reproducible,
//! seeded command-line harness.

pub mod cli;
pub mod ensembles;
pub mod error;
pub mod indices;
pub mod lyapunov;
pub mod model;
pub mod spectral;

pub use error::{ChiralError, Result};

use num_complex::Complex64;

/// Dense complex matrix used throughout.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
