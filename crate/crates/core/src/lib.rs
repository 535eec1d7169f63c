//! Singular solutions, Emden-Fowler profiles and bifurcation curves of the
//! radial Gross-Pitaevskii equation with a harmonic trap
//!
//! `u'' + (d-1)/r u' - (r^2 - lambda) u + |u|^{q-1} u + |u|^{p-1} u = 0`.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod bifurcation;
pub mod cache;
pub mod error;
pub mod integrator;
pub mod io;
pub mod params;
pub mod profiles;

pub use error::{Error, Result};
pub use params::{
    derive_constants, joseph_lundgren, validate, DerivedConstants, ProblemParams, ValidationError, ValidationMode,
};
