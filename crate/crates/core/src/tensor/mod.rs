//! Composite Hilbert spaces of three-level ions and truncated phonon modes.

pub mod krylov;
pub mod layout;
pub mod local;
pub mod lindblad;
pub mod operator;
pub mod ops;
pub mod spectral;
pub mod state;

pub use krylov::{expv, KrylovOptions, LinearMap};
pub use layout::{DimensionCaps, HilbertLayout, ION_DIM};
pub use lindblad::Liouvillian;
pub use operator::{CsrMatrix, LinearOperator, Storage};
pub use ops::{
    dense_unitary, embed_product, embed_site_operator, evolve, evolve_with, expectation, partial_trace,
    propagate_density, propagate_vector, EvolutionSettings,
};
pub use spectral::BlockSpectrum;
pub use state::{QuantumState, StateData};
