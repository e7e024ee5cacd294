//! Symbolic-numeric solvers for the cohomological equations of the Kostant
//! complex near hyperbolic singularities of integrable systems.
//!
//! The library covers three regimes for the basic equation
//! `(X_j - i h_j) g = f` on the local normal-form models:
//! formal (truncated power series), exact (rational/flat closed forms with
//! residuals that vanish identically), and smooth (flat remainders handled by
//! a homotopy integral over the linearised flow). On top of the 2D solvers sit
//! the polarised-form layer with the coboundary `d^nabla` and the constructive
//! vanishing results for 1-forms, top-degree forms, and 2-forms in dimension 6.

pub mod error;
pub mod hyperbolic2d;
pub mod io;
pub mod kostant;
pub mod normal_forms;
pub mod series;
pub mod verify;

pub use error::{Error, Result};
pub use series::{MultiIndex, Scalar, TruncatedSeries};
