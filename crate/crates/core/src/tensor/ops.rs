use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::krylov::{expv, KrylovOptions, LinearMap};
use super::layout::HilbertLayout;
use super::lindblad::Liouvillian;
use super::operator::{CsrMatrix, LinearOperator, Storage};
use super::state::{QuantumState, StateData};
use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Relative tolerance on the Hermiticity of a Hamiltonian generator.
pub const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSettings {
    pub krylov: KrylovOptions,
    /// Dimensions at or below this use dense diagonalisation.
    pub dense_threshold: usize,
    /// Largest invariant block diagonalised exactly above the dense threshold;
    /// 0 disables block diagonalisation.
    pub max_block: usize,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        Self {
            krylov: KrylovOptions::default(),
            dense_threshold: 256,
            max_block: 1024,
        }
    }
}

/// `I (x) ... (x) op (x) ... (x) I` with `op` placed at `site`.
pub fn embed_site_operator(layout: &HilbertLayout, site: usize, op: &DMatrix<C64>) -> Result<LinearOperator> {
    let csr = embed_product(layout, &[(site, op)])?;
    Ok(LinearOperator::from_sparse(csr).balanced())
}

/// Tensor product of local operators on distinct sites (identity elsewhere), in CSR form.
pub fn embed_product(layout: &HilbertLayout, factors: &[(usize, &DMatrix<C64>)]) -> Result<CsrMatrix> {
    for (k, &(site, op)) in factors.iter().enumerate() {
        let d = layout.site_dim(site)?;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: op.nrows().max(op.ncols()),
            });
        }
        if factors[..k].iter().any(|&(s, _)| s == site) {
            return Err(Error::InvalidArgument(format!("site {site} appears twice in a product")));
        }
    }
    // Nonzeros of each local operator grouped by source level.
    let local: Vec<Vec<Vec<(usize, C64)>>> = factors
        .iter()
        .map(|&(_, op)| {
            (0..op.ncols())
                .map(|c| {
                    (0..op.nrows())
                        .filter(|&r| op[(r, c)] != ZERO)
                        .map(|r| (r, op[(r, c)]))
                        .collect()
                })
                .collect()
        })
        .collect();
    let n = layout.dim();
    let mut triplets = Vec::new();
    let mut current: Vec<(usize, C64)> = Vec::new();
    let mut next: Vec<(usize, C64)> = Vec::new();
    for col in 0..n {
        current.clear();
        current.push((col, C64::new(1.0, 0.0)));
        for (f, &(site, _)) in factors.iter().enumerate() {
            let l = layout.local(col, site);
            let stride = layout.stride(site);
            next.clear();
            for &(row, v) in &current {
                for &(l2, w) in &local[f][l] {
                    next.push((row + l2 * stride - l * stride, v * w));
                }
            }
            std::mem::swap(&mut current, &mut next);
            if current.is_empty() {
                break;
            }
        }
        triplets.extend(current.iter().map(|&(r, v)| (r, col, v)));
    }
    Ok(CsrMatrix::from_triplets(n, triplets))
}

fn check_hermitian(h: &LinearOperator) -> Result<()> {
    let scale = match h.storage() {
        Storage::Sparse(m) => m.triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max),
        Storage::Dense(m) => m.iter().map(|v| v.norm()).fold(0.0, f64::max),
    };
    let dev = h.hermitian_deviation();
    if dev > HERMITIAN_TOL * scale.max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(())
}

/// `exp(-i H t)` by dense diagonalisation.
pub fn dense_unitary(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h.clone());
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -l * t)),
    );
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
        col *= *p;
    }
    scaled * v.adjoint()
}

struct OperatorMap<'a>(&'a LinearOperator, f64);

impl LinearMap for OperatorMap<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.0.apply(x, y)
    }
    fn norm_estimate(&self) -> f64 {
        self.1
    }
}

/// `exp(-i H t) psi` without validating the generator.
pub fn propagate_vector(h: &LinearOperator, t: f64, psi: &[C64], settings: &EvolutionSettings) -> Result<Vec<C64>> {
    if psi.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi.len(),
        });
    }
    if h.dim() <= settings.dense_threshold {
        let u = dense_unitary(&h.to_dense(), t);
        return Ok((u * DVector::from_column_slice(psi)).as_slice().to_vec());
    }
    let map = OperatorMap(h, h.one_norm());
    expv(&map, C64::new(0.0, -1.0), t, psi, true, &settings.krylov)
}

/// Propagates a column-major density matrix under a Lindblad generator.
pub fn propagate_density(l: &Liouvillian, t: f64, rho: &DMatrix<C64>, settings: &EvolutionSettings) -> Result<DMatrix<C64>> {
    let d = l.side();
    let out = expv(l, C64::new(1.0, 0.0), t, rho.as_slice(), false, &settings.krylov)?;
    let mut m = DMatrix::from_column_slice(d, d, &out);
    // Remove the anti-Hermitian round-off the Arnoldi projection leaves behind.
    let adj = m.adjoint();
    m = (m + adj) * C64::new(0.5, 0.0);
    Ok(m)
}

/// `exp(-iHt)` applied to a pure state, or `U rho U^dag` for a density matrix.
pub fn evolve(state: &QuantumState, generator: &LinearOperator, duration: f64) -> Result<QuantumState> {
    evolve_with(state, generator, duration, &EvolutionSettings::default())
}

pub fn evolve_with(
    state: &QuantumState,
    generator: &LinearOperator,
    duration: f64,
    settings: &EvolutionSettings,
) -> Result<QuantumState> {
    if generator.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: generator.dim(),
        });
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be non-negative, got {duration}")));
    }
    check_hermitian(generator)?;
    let layout = state.layout().clone();
    match state.data() {
        StateData::Pure(psi) => {
            let out = propagate_vector(generator, duration, psi, settings)?;
            QuantumState::pure_unchecked(layout, out)
        }
        StateData::Density(rho) => {
            let out = if rho.nrows() <= settings.dense_threshold {
                let u = dense_unitary(&generator.to_dense(), duration);
                &u * rho * u.adjoint()
            } else {
                let l = Liouvillian::new(&generator.to_sparse(), &[])?;
                propagate_density(&l, duration, rho, settings)?
            };
            QuantumState::density_unchecked(layout, out)
        }
    }
}

/// Reduced density matrix over `keep` (site indices, any order, no repeats).
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    let layout = state.layout();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("partial trace needs at least one kept site".into()));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    if keep.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("repeated site in partial trace".into()));
    }
    for &s in &keep {
        layout.site_dim(s)?;
    }
    let sub = layout.sub_layout(&keep)?;
    sub.check_density_cap()?;
    let traced: Vec<usize> = (0..layout.n_sites()).filter(|s| !keep.contains(s)).collect();
    let d = layout.dim();
    // Kept and traced-out sub-indices of every full basis index.
    let split = |i: usize, sites: &[usize]| -> usize {
        sites.iter().fold(0, |acc, &s| acc * layout.site_dims()[s] + layout.local(i, s))
    };
    let ka: Vec<usize> = (0..d).map(|i| split(i, &keep)).collect();
    let kb: Vec<usize> = (0..d).map(|i| split(i, &traced)).collect();
    let da = sub.dim();
    let db = d / da;
    let mut out = DMatrix::<C64>::zeros(da, da);
    match state.data() {
        StateData::Pure(psi) => {
            let mut m = DMatrix::<C64>::zeros(da, db);
            for i in 0..d {
                m[(ka[i], kb[i])] = psi[i];
            }
            out = &m * m.adjoint();
        }
        StateData::Density(rho) => {
            for c in 0..d {
                for r in 0..d {
                    if kb[r] == kb[c] {
                        out[(ka[r], ka[c])] += rho[(r, c)];
                    }
                }
            }
        }
    }
    QuantumState::density_unchecked(sub, out)
}

/// `<psi|A|psi>` or `Tr(rho A)`.
pub fn expectation(state: &QuantumState, op: &LinearOperator) -> Result<C64> {
    if op.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: op.dim(),
        });
    }
    Ok(match state.data() {
        StateData::Pure(psi) => {
            let a = op.apply_vec(psi);
            psi.iter().zip(&a).map(|(x, y)| x.conj() * y).sum()
        }
        StateData::Density(rho) => match op.storage() {
            Storage::Sparse(m) => m.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum(),
            Storage::Dense(m) => (m * rho).trace(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        let (ra, ca) = a.shape();
        let (rb, cb) = b.shape();
        DMatrix::from_fn(ra * rb, ca * cb, |r, col| a[(r / rb, col / cb)] * b[(r % rb, col % cb)])
    }

    fn lowering(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |r, col| if col == r + 1 { c((col as f64).sqrt()) } else { ZERO })
    }

    #[test]
    fn embedded_identity_is_identity() {
        let l = HilbertLayout::new(2, vec![3]).unwrap();
        for s in 0..3 {
            let id = DMatrix::identity(l.site_dim(s).unwrap(), l.site_dim(s).unwrap());
            let e = embed_site_operator(&l, s, &id).unwrap();
            assert_eq!(e.to_dense(), DMatrix::identity(l.dim(), l.dim()));
        }
    }

    #[test]
    fn ladder_on_mode_site() {
        let l = HilbertLayout::new(1, vec![2]).unwrap();
        let e = embed_site_operator(&l, 1, &lowering(2)).unwrap().to_dense();
        for r in 0..6 {
            for col in 0..6 {
                let expect = if r % 2 == 0 && col == r + 1 { 1.0 } else { 0.0 };
                assert_eq!(e[(r, col)], c(expect));
            }
        }
    }

    #[test]
    fn raising_on_second_ion_matches_hand_loop() {
        let l = HilbertLayout::new(2, vec![]).unwrap();
        let mut sp = DMatrix::zeros(3, 3);
        sp[(1, 0)] = c(1.0);
        let e = embed_site_operator(&l, 1, &sp).unwrap().to_dense();
        // Oracle: explicit loop over both ions' levels.
        let mut oracle = DMatrix::<C64>::zeros(9, 9);
        for a in 0..3 {
            for b in 0..3 {
                for a2 in 0..3 {
                    for b2 in 0..3 {
                        let id = if a == a2 { 1.0 } else { 0.0 };
                        oracle[(a * 3 + b, a2 * 3 + b2)] = c(id) * sp[(b, b2)];
                    }
                }
            }
        }
        assert_eq!(e, oracle);
        assert_eq!(e[(1, 0)], c(1.0));
        assert_eq!(e[(4, 3)], c(1.0));
        assert_eq!(e.column(1).norm(), 0.0);
        assert_eq!(e.column(2).norm(), 0.0);
    }

    #[test]
    fn zero_generator_leaves_state() {
        let l = HilbertLayout::new(1, vec![2]).unwrap();
        let s = QuantumState::basis(l, 3).unwrap();
        let out = evolve(&s, &LinearOperator::zeros(6), 1.7).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn half_rabi_cycle_gives_minus_i() {
        let x = DMatrix::from_row_slice(2, 2, &[ZERO, c(1.0), c(1.0), ZERO]);
        let omega = 2.3;
        let h = LinearOperator::from_dense(x * c(omega)).unwrap();
        let l = HilbertLayout::new(0, vec![2]).unwrap();
        let s = QuantumState::basis(l, 0).unwrap();
        let out = evolve(&s, &h, std::f64::consts::PI / (2.0 * omega)).unwrap();
        let a = out.amplitudes().unwrap();
        assert!(a[0].norm() < 1e-12);
        assert!((a[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_generator() {
        let l = HilbertLayout::new(0, vec![2]).unwrap();
        let s = QuantumState::basis(l, 0).unwrap();
        let h = LinearOperator::from_dense(lowering(2)).unwrap();
        assert!(matches!(evolve(&s, &h, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn bell_state_reduces_to_mixed() {
        let l = HilbertLayout::new(0, vec![2, 2]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = QuantumState::pure(l, vec![c(r), ZERO, ZERO, c(r)]).unwrap();
        let red = partial_trace(&s, &[0]).unwrap();
        let m = red.density_matrix().unwrap();
        assert!((m - DMatrix::identity(2, 2) * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn thermal_number_expectation() {
        let cut = 30;
        let l = HilbertLayout::new(0, vec![cut]).unwrap();
        let nbar: f64 = 0.5;
        let p: Vec<f64> = (0..cut).map(|n| nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 1)).collect();
        let z: f64 = p.iter().sum();
        let rho = DMatrix::from_fn(cut, cut, |r, col| if r == col { c(p[r] / z) } else { ZERO });
        let s = QuantumState::density(l.clone(), rho).unwrap();
        let a = lowering(cut);
        let num = embed_site_operator(&l, 0, &(a.adjoint() * &a)).unwrap();
        let e = expectation(&s, &num).unwrap();
        assert!((e.re - 0.5).abs() < 1e-6 && e.im.abs() < 1e-10);
        assert!((expectation(&s, &LinearOperator::identity(cut)).unwrap() - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn sigma_z_on_plus_is_zero() {
        let l = HilbertLayout::new(0, vec![2]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = QuantumState::pure(l, vec![c(r), c(r)]).unwrap();
        let z = LinearOperator::from_dense(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)]))).unwrap();
        assert!(expectation(&s, &z).unwrap().norm() < 1e-15);
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn random_vec(n: usize, seed: &mut u64) -> Vec<C64> {
        let v: Vec<C64> = (0..n).map(|_| C64::new(lcg(seed), lcg(seed))).collect();
        let nv = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / nv).collect()
    }

    #[test]
    fn krylov_matches_dense_oracle() {
        let n = 50;
        let mut s = 3u64;
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
        let h = (&a + a.adjoint()) * c(0.5);
        let psi = random_vec(n, &mut s);
        let t = 0.37;
        let settings = EvolutionSettings {
            dense_threshold: 0,
            ..Default::default()
        };
        let op = LinearOperator::from_dense(h.clone()).unwrap();
        let got = propagate_vector(&op, t, &psi, &settings).unwrap();
        let eig = SymmetricEigen::new(h);
        let v = &eig.eigenvectors;
        let coeffs = v.adjoint() * DVector::from_column_slice(&psi);
        let rotated = DVector::from_iterator(n, coeffs.iter().zip(eig.eigenvalues.iter()).map(|(x, l)| x * C64::from_polar(1.0, -l * t)));
        let exact = v * rotated;
        let err: f64 = got.iter().zip(exact.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn partial_trace_matches_index_sum_oracle() {
        let l = HilbertLayout::new(1, vec![2, 3]).unwrap();
        let mut s = 5u64;
        let psi = random_vec(l.dim(), &mut s);
        let st = QuantumState::pure(l.clone(), psi.clone()).unwrap();
        let red = partial_trace(&st, &[0, 2]).unwrap();
        let m = red.density_matrix().unwrap();
        for a in 0..3 {
            for c2 in 0..3 {
                for a2 in 0..3 {
                    for c3 in 0..3 {
                        let mut acc = ZERO;
                        for b in 0..2 {
                            acc += psi[a * 6 + b * 3 + c2] * psi[a2 * 6 + b * 3 + c3].conj();
                        }
                        assert!((m[(a * 3 + c2, a2 * 3 + c3)] - acc).norm() < 1e-12);
                    }
                }
            }
        }
        let dens = partial_trace(&st.to_density().unwrap(), &[2, 0]).unwrap();
        assert!((dens.density_matrix().unwrap() - m).norm() < 1e-12);
        assert!(partial_trace(&st, &[]).is_err());
        assert!(partial_trace(&st, &[7]).is_err());
    }

    fn random_hermitian(n: usize, seed: &mut u64, scale: f64) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(lcg(seed), lcg(seed)));
        (&a + a.adjoint()) * c(scale)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn evolution_is_unitary_and_composes(seed in any::<u64>(), t1 in 0.0f64..3.0, t2 in 0.0f64..3.0, dense in any::<bool>()) {
            let mut s = seed;
            let n = 40;
            let h = LinearOperator::from_dense(random_hermitian(n, &mut s, 1.0)).unwrap();
            let settings = EvolutionSettings { dense_threshold: if dense { 256 } else { 0 }, ..Default::default() };
            let psi = random_vec(n, &mut s);
            let a = propagate_vector(&h, t1, &psi, &settings).unwrap();
            let ab = propagate_vector(&h, t2, &a, &settings).unwrap();
            let both = propagate_vector(&h, t1 + t2, &psi, &settings).unwrap();
            let nrm = ab.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((nrm - 1.0).abs() < 1e-9);
            let diff: f64 = ab.iter().zip(&both).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(diff < 1e-8, "diff {}", diff);
        }

        #[test]
        fn disjoint_embeddings_commute_and_match_kron(seed in any::<u64>()) {
            let mut s = seed;
            let l = HilbertLayout::new(1, vec![2, 4]).unwrap();
            let a = DMatrix::from_fn(3, 3, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
            let b = DMatrix::from_fn(4, 4, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
            let ea = embed_site_operator(&l, 0, &a).unwrap();
            let eb = embed_site_operator(&l, 2, &b).unwrap();
            let ab = ea.mul(&eb).unwrap().to_dense();
            let ba = eb.mul(&ea).unwrap().to_dense();
            prop_assert!((&ab - &ba).norm() < 1e-12);
            let oracle = kron(&kron(&a, &DMatrix::identity(2, 2)), &b);
            prop_assert!((&ab - &oracle).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
            let prod = embed_product(&l, &[(0, &a), (2, &b)]).unwrap().to_dense();
            prop_assert!((&prod - &oracle).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
            let sparse = ea.to_sparse().to_dense();
            prop_assert!((sparse - ea.to_dense()).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
        }

        #[test]
        fn partial_trace_of_density_is_density(seed in any::<u64>(), keep_first in any::<bool>()) {
            let mut s = seed;
            let l = HilbertLayout::new(1, vec![2, 2]).unwrap();
            let d = l.dim();
            let a = DMatrix::from_fn(d, d, |_, _| C64::new(lcg(&mut s), lcg(&mut s)));
            let mut rho = &a * a.adjoint();
            let tr = rho.trace();
            rho /= tr;
            let st = QuantumState::density(l, rho).unwrap();
            let keep: &[usize] = if keep_first { &[0, 2] } else { &[1] };
            let red = partial_trace(&st, keep).unwrap();
            prop_assert!(red.validate().is_ok());
            prop_assert!((red.trace() - 1.0).abs() < 1e-12);
        }
    }
}
