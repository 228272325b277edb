//! Spectral gaps of periodic Schrödinger operators `-Δ + V` on R^d and the
//! impurity levels a weak perturbation `γW` pulls out of a gap edge:
//! band structure, edge geometry, leading-order laws, the Birman-Schwinger
//! pencil and a direct finite-difference oracle.

pub mod bands;
pub mod birman_schwinger;
pub mod cli;
pub mod config;
pub mod discrete;
pub mod edge_model;
pub mod error;
pub mod fiber;
pub mod green;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod predictor;
pub mod quadrature;
pub mod radial;
pub mod workflow;

pub use error::{Error, Result};
