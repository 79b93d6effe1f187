//! Fourier-spectral toolkit for the pseudo-relativistic Hartree equation
//! `i psi_t = (sqrt(-Delta + m^2) - m) psi + V psi - (|x|^{-1} * |psi|^2) psi`.

pub mod error;
pub mod evolution;
pub mod family;
pub mod fft;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod groundstate;
pub mod io;
pub mod linalg;
pub mod modulation;
pub mod potential;
pub mod spectral;
pub mod spectrum;
pub mod symmetry;
pub mod symplectic;

pub use error::{LabError, Result};
pub use field::Field;
pub use grid::Grid;
pub use spectral::{Multiplier, Norms, Spectral};
