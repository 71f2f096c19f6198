//! Simulation of Cirac-Zoller multi-qubit gates on trapped-ion chains.

pub mod chain;
pub mod compiler;
pub mod error;
pub mod noise;
pub mod pulse;
pub mod tensor;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
