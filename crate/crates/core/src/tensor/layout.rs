use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of internal levels kept per ion: |0>, |1> (clock) and |2> (auxiliary Zeeman).
pub const ION_DIM: usize = 3;

/// Upper bounds on the composite dimension a state may have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionCaps {
    pub pure: usize,
    pub density: usize,
}

impl Default for DimensionCaps {
    fn default() -> Self {
        Self {
            pure: 1 << 21,
            density: 1 << 12,
        }
    }
}

/// Composite space of `n_ions` three-level ions followed by truncated phonon modes.
///
/// Sites are numbered ion 0 .. ion N-1, then mode 0 .. mode M-1. The first site is the
/// most significant digit of the flat basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertLayout {
    n_ions: usize,
    mode_cutoffs: Vec<usize>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
    caps: DimensionCaps,
}

impl HilbertLayout {
    pub fn new(n_ions: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        Self::with_caps(n_ions, mode_cutoffs, DimensionCaps::default())
    }

    pub fn with_caps(n_ions: usize, mode_cutoffs: Vec<usize>, caps: DimensionCaps) -> Result<Self> {
        if n_ions == 0 && mode_cutoffs.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one site".into()));
        }
        if let Some(m) = mode_cutoffs.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!("mode {m} has a zero Fock cutoff")));
        }
        let dims: Vec<usize> = std::iter::repeat_n(ION_DIM, n_ions)
            .chain(mode_cutoffs.iter().copied())
            .collect();
        let mut strides = vec![1usize; dims.len()];
        let mut dim = 1usize;
        for (s, &d) in dims.iter().enumerate().rev() {
            strides[s] = dim;
            dim = dim.checked_mul(d).ok_or(Error::DimensionOverflow)?;
        }
        if dim > caps.pure {
            return Err(Error::CapacityExceeded {
                kind: "pure-state",
                dim,
                cap: caps.pure,
            });
        }
        Ok(Self {
            n_ions,
            mode_cutoffs,
            dims,
            strides,
            dim,
            caps,
        })
    }

    /// Layout with ions and no phonon modes.
    pub fn spins_only(n_ions: usize) -> Result<Self> {
        Self::new(n_ions, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    pub fn n_modes(&self) -> usize {
        self.mode_cutoffs.len()
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn mode_cutoffs(&self) -> &[usize] {
        &self.mode_cutoffs
    }

    pub fn caps(&self) -> DimensionCaps {
        self.caps
    }

    /// Site index of ion `i`.
    pub fn ion_site(&self, i: usize) -> usize {
        debug_assert!(i < self.n_ions);
        i
    }

    /// Site index of included mode `m` (position in `mode_cutoffs`).
    pub fn mode_site(&self, m: usize) -> usize {
        debug_assert!(m < self.n_modes());
        self.n_ions + m
    }

    pub fn site_dim(&self, site: usize) -> Result<usize> {
        self.dims.get(site).copied().ok_or(Error::SiteOutOfRange {
            site,
            n_sites: self.n_sites(),
        })
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn stride(&self, site: usize) -> usize {
        self.strides[site]
    }

    /// Local level of `site` inside flat basis index `index`.
    #[inline]
    pub fn local(&self, index: usize, site: usize) -> usize {
        (index / self.strides[site]) % self.dims[site]
    }

    pub fn flatten(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: self.n_sites(),
                found: levels.len(),
            });
        }
        let mut index = 0;
        for (s, (&l, &d)) in levels.iter().zip(&self.dims).enumerate() {
            if l >= d {
                return Err(Error::InvalidArgument(format!(
                    "level {l} out of range for site {s} of dimension {d}"
                )));
            }
            index += l * self.strides[s];
        }
        Ok(index)
    }

    pub fn unflatten(&self, index: usize) -> Vec<usize> {
        (0..self.n_sites()).map(|s| self.local(index, s)).collect()
    }

    pub fn check_density_cap(&self) -> Result<()> {
        if self.dim > self.caps.density {
            Err(Error::CapacityExceeded {
                kind: "density-matrix",
                dim: self.dim,
                cap: self.caps.density,
            })
        } else {
            Ok(())
        }
    }

    /// Layout restricted to the given ascending list of sites.
    pub fn sub_layout(&self, sites: &[usize]) -> Result<Self> {
        let mut n_ions = 0;
        let mut cutoffs = Vec::new();
        for &s in sites {
            let d = self.site_dim(s)?;
            if s < self.n_ions {
                if !cutoffs.is_empty() {
                    return Err(Error::InvalidArgument("sites must be ascending".into()));
                }
                n_ions += 1;
            } else {
                cutoffs.push(d);
            }
        }
        Self::with_caps(n_ions, cutoffs, self.caps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dimension_is_product_of_sites() {
        let l = HilbertLayout::new(3, vec![5, 4, 4]).unwrap();
        assert_eq!(l.dim(), 27 * 80);
        assert_eq!(l.n_sites(), 6);
        assert_eq!(l.stride(5), 1);
        assert_eq!(l.stride(0), 9 * 80);
    }

    #[test]
    fn rejects_oversized_layouts() {
        let err = HilbertLayout::new(14, vec![]).unwrap_err();
        assert!(err.is_capacity());
        let err = HilbertLayout::new(60, vec![]).unwrap_err();
        assert_eq!(err, Error::DimensionOverflow);
        let l = HilbertLayout::new(3, vec![5, 4, 4]).unwrap();
        assert!(l.check_density_cap().is_ok());
        let l = HilbertLayout::new(5, vec![5, 4]).unwrap();
        assert!(l.check_density_cap().is_err());
    }

    #[test]
    fn zero_cutoff_rejected() {
        assert!(HilbertLayout::new(1, vec![0]).is_err());
    }

    proptest! {
        #[test]
        fn flatten_inverts_unflatten(n_ions in 0usize..4, cut in proptest::collection::vec(1usize..5, 0..3), seed in any::<usize>()) {
            prop_assume!(n_ions + cut.len() > 0);
            let l = HilbertLayout::new(n_ions, cut).unwrap();
            let i = seed % l.dim();
            prop_assert_eq!(l.flatten(&l.unflatten(i)).unwrap(), i);
        }
    }
}
