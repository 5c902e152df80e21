//! Numerical laboratory for the thin film equation near the Smyth–Hill self-similar solution.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod jet;
pub mod norms;
pub mod profiles;
pub mod quadrature;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use profiles::ModelParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
