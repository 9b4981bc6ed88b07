//! Two-material heat-conduction design by a nonlinear-diffusion level-set
//! method on P1 triangular finite elements.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod design;
pub mod error;
pub mod export;
pub mod fem;
pub mod heat;
pub mod mesh;
pub mod optimizer;
pub mod oracles;
pub mod sensitivity;
pub mod spectral;

pub use error::{Error, Result};
