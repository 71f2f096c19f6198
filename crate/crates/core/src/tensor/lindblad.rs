//! Matrix-free Lindblad generator acting on column-major density matrices.

use num_complex::Complex64 as C64;

use super::krylov::LinearMap;
use super::operator::CsrMatrix;
use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Collapse operator with at most one nonzero per row, so `C rho C^dag` needs
/// no temporary.
#[derive(Debug, Clone)]
struct Monomial {
    /// Row r maps to (source column, value).
    entries: Vec<Option<(usize, C64)>>,
}

impl Monomial {
    fn from_csr(c: &CsrMatrix) -> Option<Self> {
        let mut entries = Vec::with_capacity(c.dim());
        for r in 0..c.dim() {
            let (cols, vals) = c.row(r);
            match cols.len() {
                0 => entries.push(None),
                1 => entries.push(Some((cols[0], vals[0]))),
                _ => return None,
            }
        }
        Some(Self { entries })
    }
}

/// `L(rho) = -i (H_eff rho - rho H_eff^dag) + sum_k C_k rho C_k^dag`
/// with `H_eff = H - (i/2) sum_k C_k^dag C_k`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    d: usize,
    h_eff: CsrMatrix,
    monomial: Vec<Monomial>,
    general: Vec<CsrMatrix>,
    norm: f64,
}

impl Liouvillian {
    pub fn new(hamiltonian: &CsrMatrix, collapse: &[CsrMatrix]) -> Result<Self> {
        let d = hamiltonian.dim();
        let mut h_eff = hamiltonian.clone();
        let mut monomial = Vec::new();
        let mut general = Vec::new();
        let mut jump_norm = 0.0;
        for c in collapse {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.dim(),
                });
            }
            let cdc = c.adjoint().mul(c);
            h_eff = h_eff.add(&cdc.scale(C64::new(0.0, -0.5)));
            jump_norm += c.one_norm().powi(2);
            match Monomial::from_csr(c) {
                Some(m) => monomial.push(m),
                None => general.push(c.clone()),
            }
        }
        let norm = 2.0 * h_eff.one_norm() + jump_norm;
        Ok(Self {
            d,
            h_eff,
            monomial,
            general,
            norm,
        })
    }

    /// Side length of the density matrix.
    pub fn side(&self) -> usize {
        self.d
    }

    pub fn effective_hamiltonian(&self) -> &CsrMatrix {
        &self.h_eff
    }
}

/// `y[:, j] += alpha * A x[:, j]` for every column.
fn left_mul_add(a: &CsrMatrix, x: &[C64], y: &mut [C64], d: usize, alpha: C64) {
    for (xc, yc) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)) {
        a.matvec_add(alpha, xc, yc);
    }
}

/// `y += alpha * X B^dag`; column i of the result is `sum_k conj(B[i,k]) X[:, k]`.
fn right_mul_adjoint_add(b: &CsrMatrix, x: &[C64], y: &mut [C64], d: usize, alpha: C64) {
    for (i, yc) in y.chunks_exact_mut(d).enumerate() {
        let (cols, vals) = b.row(i);
        for (&k, &v) in cols.iter().zip(vals) {
            let w = alpha * v.conj();
            let xk = &x[k * d..(k + 1) * d];
            for (yr, xr) in yc.iter_mut().zip(xk) {
                *yr += w * xr;
            }
        }
    }
}

impl LinearMap for Liouvillian {
    fn dim(&self) -> usize {
        self.d * self.d
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.d;
        y.iter_mut().for_each(|v| *v = ZERO);
        left_mul_add(&self.h_eff, x, y, d, -I);
        right_mul_adjoint_add(&self.h_eff, x, y, d, I);
        for m in &self.monomial {
            for (c, yc) in y.chunks_exact_mut(d).enumerate() {
                let Some((pc, vc)) = m.entries[c] else { continue };
                let vc = vc.conj();
                let xc = &x[pc * d..(pc + 1) * d];
                for (yr, e) in yc.iter_mut().zip(&m.entries) {
                    if let Some((pr, vr)) = e {
                        *yr += vr * vc * xc[*pr];
                    }
                }
            }
        }
        if !self.general.is_empty() {
            let mut tmp = vec![ZERO; d * d];
            for c in &self.general {
                tmp.iter_mut().for_each(|v| *v = ZERO);
                right_mul_adjoint_add(c, x, &mut tmp, d, C64::new(1.0, 0.0));
                left_mul_add(c, &tmp, y, d, C64::new(1.0, 0.0));
            }
        }
    }

    fn norm_estimate(&self) -> f64 {
        self.norm
    }
}
