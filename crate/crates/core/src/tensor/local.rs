//! Small single-site operators.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Phonon annihilation operator truncated to `cutoff` Fock levels.
pub fn annihilation(cutoff: usize) -> DMatrix<C64> {
    DMatrix::from_fn(cutoff, cutoff, |r, c| {
        if c == r + 1 {
            C64::new((c as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn number(cutoff: usize) -> DMatrix<C64> {
    DMatrix::from_fn(cutoff, cutoff, |r, c| {
        if r == c {
            C64::new(r as f64, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `|to><from|` on a `dim`-level site.
pub fn transition(dim: usize, to: usize, from: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(to, from)] = C64::new(1.0, 0.0);
    m
}

pub fn projector(dim: usize, level: usize) -> DMatrix<C64> {
    transition(dim, level, level)
}
