// Negated comparisons are used on purpose so that NaN inputs fail the checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Detection and characterization of singularities in sampled manifold unions
//! through the graph Laplacian of linear probe functions.

pub mod error;
pub mod estimators;
pub mod hyptest;
pub mod io;
pub mod laplacian;
pub mod manifold;
pub mod oracle;
pub mod pca;
pub mod quadrature;
pub mod seeds;
pub mod special;
pub mod theory;
pub mod vecops;
pub mod zeroset;

pub use error::{Error, Result};
