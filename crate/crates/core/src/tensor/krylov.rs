//! Action of matrix exponentials on vectors by Krylov projection with adaptive
//! time stepping (Arnoldi for general generators, Lanczos for Hermitian ones).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Matrix-free linear map on a flat complex vector.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// Upper estimate of the operator norm.
    fn norm_estimate(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovOptions {
    /// Maximum Krylov subspace dimension.
    pub dim: usize,
    /// Local error target, relative to the initial norm, per unit of the full duration.
    pub tol: f64,
    /// Rejected steps tolerated in a row before giving up.
    pub max_rejections: usize,
    /// Hard limit on the number of accepted steps.
    pub max_steps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            dim: 30,
            tol: 1e-10,
            max_rejections: 30,
            max_steps: 1_000_000,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Computes `exp(t * coeff * A) v`.
///
/// With `hermitian = true` the map must be Hermitian and a three-term Lanczos
/// recurrence replaces full Arnoldi orthogonalisation. Typical use is
/// `coeff = -i` for Schroedinger propagation and `coeff = 1` for a Liouvillian.
pub fn expv(
    op: &dyn LinearMap,
    coeff: C64,
    t: f64,
    v: &[C64],
    hermitian: bool,
    opts: &KrylovOptions,
) -> Result<Vec<C64>> {
    let n = op.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid duration {t}")));
    }
    let beta0 = norm(v);
    if t == 0.0 || beta0 == 0.0 {
        return Ok(v.to_vec());
    }
    let anorm = (op.norm_estimate() * coeff.norm()).max(f64::MIN_POSITIVE);
    let m = opts.dim.min(n).max(1);
    let xm = 1.0 / m as f64;
    let btol = 1e-14 * anorm.max(1.0);
    let gamma = 0.9;
    let delta = 1.2;

    let mut w = v.to_vec();
    let mut beta = beta0;
    let mut t_now = 0.0;
    let mut t_new = (3.0 / anorm).min(t);
    let mut basis: Vec<Vec<C64>> = (0..=m).map(|_| vec![ZERO; n]).collect();
    let mut p = vec![ZERO; n];
    let mut steps = 0;

    while t_now < t {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Numerical(format!(
                "Krylov propagation exceeded {} steps",
                opts.max_steps
            )));
        }
        let mut tau = (t - t_now).min(t_new);

        // Build the projected matrix of coeff*A.
        for (b, wi) in basis[0].iter_mut().zip(&w) {
            *b = wi / beta;
        }
        let mut h = DMatrix::<C64>::zeros(m + 2, m + 2);
        let mut k = m;
        let mut happy = false;
        for j in 0..m {
            op.apply(&basis[j], &mut p);
            if hermitian {
                let alpha = dot(&basis[j], &p);
                axpy(-alpha, &basis[j], &mut p);
                h[(j, j)] = alpha;
                if j > 0 {
                    let prev = h[(j - 1, j)];
                    axpy(-prev, &basis[j - 1], &mut p);
                }
            } else {
                for i in 0..=j {
                    let hij = dot(&basis[i], &p);
                    axpy(-hij, &basis[i], &mut p);
                    h[(i, j)] = hij;
                }
            }
            let s = norm(&p);
            if s < btol {
                k = j + 1;
                happy = true;
                break;
            }
            h[(j + 1, j)] = C64::new(s, 0.0);
            if hermitian {
                h[(j, j + 1)] = C64::new(s, 0.0);
            }
            let next = &mut basis[j + 1];
            for (b, pi) in next.iter_mut().zip(&p) {
                *b = pi / s;
            }
        }
        let h = h.map(|x| x * coeff);

        let (f_col, err_loc) = if happy {
            tau = t - t_now;
            let f = (h.view((0, 0), (k, k)) * C64::new(tau, 0.0)).exp();
            (f.column(0).iter().copied().collect::<Vec<_>>(), 0.0)
        } else {
            op.apply(&basis[m], &mut p);
            let avnorm = norm(&p) * coeff.norm();
            let mut hbar = h.clone();
            hbar[(m + 1, m)] = C64::new(1.0, 0.0);
            let mut rejections = 0;
            loop {
                let f = (&hbar * C64::new(tau, 0.0)).exp();
                let err1 = (beta * f[(m, 0)]).norm();
                let err2 = (beta * f[(m + 1, 0)]).norm() * avnorm;
                let err_loc = if err1 > 10.0 * err2 {
                    err2
                } else if err1 > err2 {
                    err1 * err2 / (err1 - err2)
                } else {
                    err1
                };
                let allowed = delta * opts.tol * beta0 * tau / t;
                if err_loc <= allowed {
                    break (f.column(0).rows(0, m + 1).iter().copied().collect(), err_loc);
                }
                rejections += 1;
                if rejections > opts.max_rejections {
                    return Err(Error::Numerical(format!(
                        "Krylov step rejected {rejections} times (local error {err_loc:.3e})"
                    )));
                }
                let ratio = if err_loc.is_finite() && err_loc > 0.0 {
                    (opts.tol * beta0 * tau / t / err_loc).powf(xm)
                } else {
                    0.2
                };
                tau *= (gamma * ratio).clamp(0.1, 0.9);
            }
        };

        let mut next = vec![ZERO; n];
        for (j, fj) in f_col.iter().enumerate() {
            axpy(*fj * beta, &basis[j], &mut next);
        }
        w = next;
        beta = norm(&w);
        t_now += tau;
        if !beta.is_finite() {
            return Err(Error::Numerical("Krylov propagation produced a non-finite norm".into()));
        }
        if beta == 0.0 {
            return Ok(w);
        }
        t_new = if err_loc > 0.0 {
            let allowed = opts.tol * beta0 * tau / t;
            gamma * tau * (allowed / err_loc).powf(xm).min(5.0)
        } else {
            tau * 5.0
        };
    }
    Ok(w)
}

/// `exp(M)` for a small dense matrix.
pub fn dense_expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.clone().exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::operator::CsrMatrix;

    struct Dense(DMatrix<C64>);

    impl LinearMap for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &[C64], y: &mut [C64]) {
            let v = &self.0 * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        }
        fn norm_estimate(&self) -> f64 {
            CsrMatrix::from_dense(&self.0).one_norm()
        }
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn general_generator_matches_dense_exponential() {
        let n = 40;
        let mut s = 7u64;
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
        let v: Vec<C64> = (0..n).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let t = 2.5;
        let exact = (&a * C64::new(t, 0.0)).exp() * nalgebra::DVector::from_column_slice(&v);
        let got = expv(&Dense(a), C64::new(1.0, 0.0), t, &v, false, &KrylovOptions::default()).unwrap();
        let err: f64 = got.iter().zip(exact.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8 * exact.norm(), "err {err}");
    }

    #[test]
    fn hermitian_lanczos_preserves_norm() {
        let n = 60;
        let mut s = 11u64;
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
        let h = (&a + a.adjoint()) * C64::new(20.0, 0.0);
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let got = expv(&Dense(h), C64::new(0.0, -1.0), 1.3, &v, true, &KrylovOptions::default()).unwrap();
        assert!((norm(&got) - 1.0).abs() < 1e-9);
    }
}
