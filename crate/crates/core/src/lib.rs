//! Numerical workbench for analytic torsion of Witten deformations on a
//! circle base with flat fibers: Clifford algebra, model spectra, discrete
//! operators, zeta regularization and adiabatic-limit experiments.

pub mod adiabatic_lab;
pub mod clifford;
pub mod discrete_operators;
pub mod error;
pub mod heat_zeta;
pub mod linalg;
pub mod model_spectra;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
