//! Exact propagation by eigendecomposition of the connected blocks of a sparse
//! generator. Suited to generators whose diagonal spread makes Krylov stepping
//! slow but whose couplings split the space into small invariant blocks.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::operator::CsrMatrix;
use crate::error::{Error, Result};

/// Reconstruction error tolerated, relative to the block's largest entry.
const RECONSTRUCTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    vectors: DMatrix<C64>,
    inverse: DMatrix<C64>,
    values: Vec<C64>,
}

/// `A = sum_b V_b diag(lambda_b) V_b^-1` over invariant index blocks.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    dim: usize,
    blocks: Vec<Block>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Index sets of the connected components of the sparsity graph.
pub fn components(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    for (r, c, v) in a.triplets() {
        if r != c && v != C64::new(0.0, 0.0) {
            let (x, y) = (find(&mut parent, r), find(&mut parent, c));
            if x != y {
                parent[x.max(y)] = x.min(y);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if label[root] == usize::MAX {
            label[root] = out.len();
            out.push(Vec::new());
        }
        out[label[root]].push(i);
    }
    out
}

/// Size of the largest invariant block of `a`.
pub fn largest_block(a: &CsrMatrix) -> usize {
    components(a).iter().map(Vec::len).max().unwrap_or(0)
}

fn decompose(m: &DMatrix<C64>, hermitian: bool) -> Result<(DMatrix<C64>, DMatrix<C64>, Vec<C64>)> {
    let n = m.nrows();
    if n == 1 {
        return Ok((DMatrix::identity(1, 1), DMatrix::identity(1, 1), vec![m[(0, 0)]]));
    }
    let f = Mat::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
    let (vectors, values) = if hermitian {
        let e = f
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Hermitian eigendecomposition failed: {e:?}")))?;
        let u = e.U();
        let s = e.S().column_vector();
        (DMatrix::from_fn(n, n, |i, j| u[(i, j)]), (0..n).map(|i| s[i]).collect::<Vec<_>>())
    } else {
        let e = f
            .eigen()
            .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let u = e.U();
        let s = e.S().column_vector();
        (DMatrix::from_fn(n, n, |i, j| u[(i, j)]), (0..n).map(|i| s[i]).collect::<Vec<_>>())
    };
    let inverse = if hermitian {
        vectors.adjoint()
    } else {
        vectors
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("defective block in eigendecomposition".into()))?
    };
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let rebuilt = &vectors * DMatrix::from_diagonal(&DVector::from_vec(values.clone())) * &inverse;
    let err = (rebuilt - m).iter().map(|x| x.norm()).fold(0.0, f64::max);
    if err > RECONSTRUCTION_TOL * scale {
        return Err(Error::Numerical(format!(
            "block eigendecomposition reconstructs with relative error {:.2e}",
            err / scale
        )));
    }
    Ok((vectors, inverse, values))
}

impl BlockSpectrum {
    /// Decomposes `a`; blocks larger than `max_block` are refused.
    pub fn new(a: &CsrMatrix, hermitian: bool, max_block: usize) -> Result<Self> {
        let comps = components(a);
        if let Some(big) = comps.iter().map(Vec::len).max() {
            if big > max_block {
                return Err(Error::CapacityExceeded {
                    kind: "spectral block",
                    dim: big,
                    cap: max_block,
                });
            }
        }
        let mut blocks = Vec::with_capacity(comps.len());
        for indices in comps {
            let m = DMatrix::from_fn(indices.len(), indices.len(), |r, c| a.get(indices[r], indices[c]));
            let (vectors, inverse, values) = decompose(&m, hermitian)?;
            blocks.push(Block {
                indices,
                vectors,
                inverse,
                values,
            });
        }
        Ok(Self { dim: a.dim(), blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of `v` in the eigenbasis, block by block.
    pub fn coefficients(&self, v: &[C64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            let local = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| v[i]));
            out.extend((&b.inverse * local).iter());
        }
        out
    }

    /// `exp(coeff t A) v` for `v` given by its eigenbasis coordinates.
    pub fn evolve_coefficients(&self, coeffs: &[C64], coeff: C64, t: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        let mut offset = 0;
        for b in &self.blocks {
            let k = b.indices.len();
            let scaled = DVector::from_iterator(
                k,
                (0..k).map(|j| coeffs[offset + j] * (coeff * t * b.values[j]).exp()),
            );
            let local = &b.vectors * scaled;
            for (j, &i) in b.indices.iter().enumerate() {
                out[i] = local[j];
            }
            offset += k;
        }
        out
    }

    /// `exp(coeff t A) v`.
    pub fn apply(&self, coeff: C64, t: f64, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self.evolve_coefficients(&self.coefficients(v), coeff, t))
    }
}
