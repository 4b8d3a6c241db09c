//! Numerical engine for parameter-dependent nonlinear Cauchy problems that
//! are not solvable by power series at t = 0: it builds the divergent formal
//! solution, passes to the Borel plane, solves the convolution equation
//! there by a contraction map away from the singular directions, and
//! reconstructs actual sectorial solutions by Laplace and inverse Fourier
//! transforms. Verification routines quantify exponential flatness between
//! neighboring sectors and the Gevrey character of the parameter expansion.

pub mod borel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod presets;
pub mod problem;
pub mod quad;
pub mod series;
pub mod solver;
pub mod special;
pub mod transforms;
pub mod util;
pub mod verifier;

pub use error::{Error, Result};
