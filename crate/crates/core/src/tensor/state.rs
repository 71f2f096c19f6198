use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::layout::HilbertLayout;
use crate::error::{Error, Result};

pub const NORM_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum StateData {
    Pure(Vec<C64>),
    /// Column-major density matrix.
    Density(DMatrix<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    layout: HilbertLayout,
    data: StateData,
}

impl QuantumState {
    /// Normalised pure state. The norm must be 1 within `NORM_TOL`.
    pub fn pure(layout: HilbertLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let s = Self::pure_unchecked(layout, amplitudes)?;
        s.validate()?;
        Ok(s)
    }

    /// Pure state without the normalisation check (dimension is still checked).
    pub fn pure_unchecked(layout: HilbertLayout, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self {
            layout,
            data: StateData::Pure(amplitudes),
        })
    }

    pub fn density(layout: HilbertLayout, rho: DMatrix<C64>) -> Result<Self> {
        let s = Self::density_unchecked(layout, rho)?;
        s.validate()?;
        Ok(s)
    }

    pub fn density_unchecked(layout: HilbertLayout, rho: DMatrix<C64>) -> Result<Self> {
        layout.check_density_cap()?;
        let d = layout.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rho.nrows().max(rho.ncols()),
            });
        }
        Ok(Self {
            layout,
            data: StateData::Density(rho),
        })
    }

    /// Computational basis state with flat index `index`.
    pub fn basis(layout: HilbertLayout, index: usize) -> Result<Self> {
        if index >= layout.dim() {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {}",
                layout.dim()
            )));
        }
        let mut v = vec![C64::new(0.0, 0.0); layout.dim()];
        v[index] = C64::new(1.0, 0.0);
        Self::pure_unchecked(layout, v)
    }

    /// Product of normalised per-site vectors.
    pub fn product(layout: HilbertLayout, sites: &[Vec<C64>]) -> Result<Self> {
        if sites.len() != layout.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_sites(),
                found: sites.len(),
            });
        }
        let mut amp = vec![C64::new(1.0, 0.0)];
        for (s, v) in sites.iter().enumerate() {
            let d = layout.site_dim(s)?;
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            amp = amp
                .iter()
                .flat_map(|a| v.iter().map(move |b| a * b))
                .collect();
        }
        Self::pure(layout, amp)
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn into_data(self) -> StateData {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn amplitudes(&self) -> Option<&[C64]> {
        match &self.data {
            StateData::Pure(v) => Some(v),
            StateData::Density(_) => None,
        }
    }

    pub fn density_matrix(&self) -> Option<&DMatrix<C64>> {
        match &self.data {
            StateData::Pure(_) => None,
            StateData::Density(m) => Some(m),
        }
    }

    /// Promotes a pure state to |psi><psi|; density states are cloned.
    pub fn to_density(&self) -> Result<Self> {
        match &self.data {
            StateData::Density(_) => Ok(self.clone()),
            StateData::Pure(v) => {
                self.layout.check_density_cap()?;
                let d = v.len();
                let rho = DMatrix::from_fn(d, d, |r, c| v[r] * v[c].conj());
                Ok(Self {
                    layout: self.layout.clone(),
                    data: StateData::Density(rho),
                })
            }
        }
    }

    /// Diagonal of the density matrix in the flat basis.
    pub fn populations(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            StateData::Density(m) => (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
        }
    }

    /// Norm squared for pure states, trace for density matrices.
    pub fn trace(&self) -> f64 {
        self.populations().iter().sum()
    }

    /// <phi|rho|phi> for a normalised pure reference vector.
    pub fn overlap_with(&self, phi: &[C64]) -> Result<f64> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: phi.len(),
            });
        }
        Ok(match &self.data {
            StateData::Pure(v) => {
                let s: C64 = phi.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                s.norm_sqr()
            }
            StateData::Density(m) => {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..m.ncols() {
                    if phi[c] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let col: C64 = (0..m.nrows()).map(|r| phi[r].conj() * m[(r, c)]).sum();
                    acc += col * phi[c];
                }
                acc.re
            }
        })
    }

    /// Checks the pure-norm or density-matrix invariants.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            StateData::Pure(v) => {
                let n: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                if (n - 1.0).abs() > NORM_TOL {
                    return Err(Error::Numerical(format!("state norm {n} differs from 1")));
                }
            }
            StateData::Density(m) => {
                let dev = hermitian_deviation(m);
                if dev > NORM_TOL {
                    return Err(Error::NotHermitian { deviation: dev });
                }
                let tr: f64 = (0..m.nrows()).map(|i| m[(i, i)].re).sum();
                if (tr - 1.0).abs() > NORM_TOL {
                    return Err(Error::Numerical(format!("density trace {tr} differs from 1")));
                }
                let min = min_eigenvalue(m);
                if min < -PSD_TOL {
                    return Err(Error::Numerical(format!(
                        "density matrix has negative eigenvalue {min:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for c in 0..m.ncols() {
        for r in 0..=c {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub(crate) fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_and_product_states() {
        let l = HilbertLayout::new(1, vec![2]).unwrap();
        let s = QuantumState::basis(l.clone(), 4).unwrap();
        assert_eq!(s.populations()[4], 1.0);
        let one = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        let p = QuantumState::product(l, &[vec![z, z, one], vec![one, z]]).unwrap();
        assert_eq!(p.amplitudes().unwrap()[4], one);
    }

    #[test]
    fn rejects_invalid_states() {
        let l = HilbertLayout::new(1, vec![]).unwrap();
        let half = C64::new(0.5, 0.0);
        assert!(QuantumState::pure(l.clone(), vec![half, half, half]).is_err());
        let mut rho = DMatrix::zeros(3, 3);
        rho[(0, 0)] = C64::new(1.5, 0.0);
        rho[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(QuantumState::density(l.clone(), rho).is_err());
        let mut rho = DMatrix::zeros(3, 3);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        rho[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(
            QuantumState::density(l, rho),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn promotion_to_density_is_valid() {
        let l = HilbertLayout::new(1, vec![2]).unwrap();
        let a = C64::new(0.6, 0.0);
        let b = C64::new(0.0, 0.8);
        let mut v = vec![C64::new(0.0, 0.0); 6];
        v[0] = a;
        v[3] = b;
        let rho = QuantumState::pure(l, v.clone()).unwrap().to_density().unwrap();
        rho.validate().unwrap();
        assert!((rho.overlap_with(&v).unwrap() - 1.0).abs() < 1e-14);
    }
}
