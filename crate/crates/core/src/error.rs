use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site index {site} out of range for a layout with {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("Hilbert-space dimension overflows the index type")]
    DimensionOverflow,

    #[error("{kind} dimension {dim} exceeds the configured cap of {cap}")]
    CapacityExceeded {
        kind: &'static str,
        dim: usize,
        cap: usize,
    },

    #[error("generator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("equilibrium search did not converge in {iterations} Newton steps (gradient norm {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("transverse mode {mode} is unstable (squared frequency {omega_sq:.4e} rad^2/s^2): the chain is not linear")]
    UnstableMode { mode: usize, omega_sq: f64 },

    #[error("bus mode {mode} couples too weakly to gate ion {ion} (|eta| ratio {ratio:.2e})")]
    WeakCoupling { mode: usize, ion: usize, ratio: f64 },

    #[error("Fock cutoff {cutoff} for mode {mode} discards {lost:.3e} of the thermal weight (n_bar = {nbar})")]
    CutoffTooSmall {
        mode: usize,
        cutoff: usize,
        nbar: f64,
        lost: f64,
    },

    #[error("time step {step:.3e} s exceeds the limit {limit:.3e} s set by the largest detuning")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("numerical contract violated: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by a configuration that is too large to simulate.
    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::CapacityExceeded { .. } | Error::DimensionOverflow)
    }

    /// True for errors that signal a broken numerical invariant.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
