use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Fill fraction above which an operator is stored densely.
pub const DENSE_FILL_THRESHOLD: f64 = 0.25;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Square compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    /// Builds a matrix from (row, col, value) entries; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            n,
            indptr,
            indices,
            values,
        };
        m.prune(0.0);
        m
    }

    /// Drops entries with magnitude <= `tol`.
    pub fn prune(&mut self, tol: f64) {
        if self.values.iter().all(|v| v.norm() > tol) {
            return;
        }
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k].norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => ZERO,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |r| {
            let (idx, val) = self.row(r);
            idx.iter().zip(val).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            let mut acc = ZERO;
            for (&c, &v) in idx.iter().zip(val) {
                acc += v * x[c];
            }
            *yr = acc;
        }
    }

    /// `y += alpha A x`
    pub fn matvec_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            let mut acc = ZERO;
            for (&c, &v) in idx.iter().zip(val) {
                acc += v * x[c];
            }
            *yr += alpha * acc;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m.prune(0.0);
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_triplets(self.n, self.triplets().chain(other.triplets()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = Vec::new();
        for r in 0..self.n {
            let (idx, val) = self.row(r);
            for (&k, &a) in idx.iter().zip(val) {
                let (idx2, val2) = other.row(k);
                for (&c, &b) in idx2.iter().zip(val2) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.n, t)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        Self::from_triplets(
            n,
            (0..n).flat_map(|r| (0..n).map(move |c| (r, c, m[(r, c)]))),
        )
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermitian_deviation(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut cols = vec![0.0; self.n];
        for (_, c, v) in self.triplets() {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    /// Diagonal entries.
    pub fn diagonal_values(&self) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix),
}

/// Square complex operator on a composite space, stored densely or sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    storage: Storage,
}

impl LinearOperator {
    pub fn from_dense(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self {
            storage: Storage::Dense(m),
        })
    }

    pub fn from_sparse(m: CsrMatrix) -> Self {
        Self {
            storage: Storage::Sparse(m),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sparse(CsrMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_sparse(CsrMatrix::zeros(n))
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows(),
            Storage::Sparse(m) => m.dim(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.iter().filter(|v| **v != ZERO).count(),
            Storage::Sparse(m) => m.nnz(),
        }
    }

    /// Re-chooses the storage according to the fill fraction.
    pub fn balanced(self) -> Self {
        let n = self.dim();
        let fill = self.nnz() as f64 / (n * n).max(1) as f64;
        match self.storage {
            Storage::Sparse(m) if fill > DENSE_FILL_THRESHOLD => Self {
                storage: Storage::Dense(m.to_dense()),
            },
            Storage::Dense(m) if fill <= DENSE_FILL_THRESHOLD => Self {
                storage: Storage::Sparse(CsrMatrix::from_dense(&m)),
            },
            storage => Self { storage },
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(m) => CsrMatrix::from_dense(m),
            Storage::Sparse(m) => m.clone(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(r, c)],
            Storage::Sparse(m) => m.get(r, c),
        }
    }

    /// `y = A x`
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        match &self.storage {
            Storage::Sparse(m) => m.matvec(x, y),
            Storage::Dense(m) => {
                y.iter_mut().for_each(|v| *v = ZERO);
                for (c, col) in m.column_iter().enumerate() {
                    let xc = x[c];
                    if xc == ZERO {
                        continue;
                    }
                    for (yr, &a) in y.iter_mut().zip(col.iter()) {
                        *yr += a * xc;
                    }
                }
            }
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply(x, &mut y);
        y
    }

    pub fn adjoint(&self) -> Self {
        match &self.storage {
            Storage::Dense(m) => Self {
                storage: Storage::Dense(m.adjoint()),
            },
            Storage::Sparse(m) => Self::from_sparse(m.adjoint()),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        match &self.storage {
            Storage::Dense(m) => Self {
                storage: Storage::Dense(m * s),
            },
            Storage::Sparse(m) => Self::from_sparse(m.scale(s)),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => Self::from_sparse(a.add(b)),
            _ => Self {
                storage: Storage::Dense(self.to_dense() + other.to_dense()),
            },
        })
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => Self::from_sparse(a.mul(b)),
            _ => Self {
                storage: Storage::Dense(self.to_dense() * other.to_dense()),
            },
        })
    }

    pub fn hermitian_deviation(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.hermitian_deviation(),
            Storage::Dense(m) => (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn one_norm(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.one_norm(),
            Storage::Dense(m) => m
                .column_iter()
                .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    pub(crate) fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}
