//! Noise channels: motional heating and dephasing, Zeeman dephasing of the
//! auxiliary level, thermal initial occupations and readout (SPAM) errors.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::local::{annihilation, number, projector};
use crate::tensor::{embed_site_operator, CsrMatrix, HilbertLayout, LinearOperator, QuantumState, ION_DIM};

pub const COM_HEATING_RATE: f64 = 614.0;
pub const MODE_HEATING_RATE: f64 = 10.0;
pub const MOTIONAL_COHERENCE_TIME: f64 = 8e-3;
pub const ZEEMAN_COHERENCE_TIME: f64 = 100e-3;
pub const BUS_NBAR: f64 = 0.02;
pub const SPECTATOR_NBAR: f64 = 0.5;
pub const CROSSTALK_RATIO: f64 = 0.02;
pub const SPAM_ERROR: f64 = 0.005;

/// Noise parameters. Per-mode vectors are indexed by chain mode (0 = COM),
/// `spam_error` by chain ion. A coherence time of `None` disables that channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Quanta per second.
    pub heating_rate: Vec<f64>,
    /// Seconds.
    pub motional_coherence_time: Vec<Option<f64>>,
    /// Seconds.
    pub zeeman_coherence_time: Option<f64>,
    pub initial_nbar: Vec<f64>,
    pub crosstalk_ratio: f64,
    pub spam_error: Vec<f64>,
    /// Largest thermal weight a Fock cutoff may discard.
    pub thermal_truncation_tol: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::standard(5, 5, 4)
    }
}

impl NoiseModel {
    /// Measured rates of the reference device with `bus_mode` cooled to the ground state.
    pub fn standard(n_ions: usize, n_modes: usize, bus_mode: usize) -> Self {
        Self {
            heating_rate: (0..n_modes)
                .map(|m| if m == 0 { COM_HEATING_RATE } else { MODE_HEATING_RATE })
                .collect(),
            motional_coherence_time: vec![Some(MOTIONAL_COHERENCE_TIME); n_modes],
            zeeman_coherence_time: Some(ZEEMAN_COHERENCE_TIME),
            initial_nbar: (0..n_modes)
                .map(|m| if m == bus_mode { BUS_NBAR } else { SPECTATOR_NBAR })
                .collect(),
            crosstalk_ratio: CROSSTALK_RATIO,
            spam_error: vec![SPAM_ERROR; n_ions],
            thermal_truncation_tol: 1e-3,
        }
    }

    pub fn noiseless(n_ions: usize, n_modes: usize) -> Self {
        Self {
            heating_rate: vec![0.0; n_modes],
            motional_coherence_time: vec![None; n_modes],
            zeeman_coherence_time: None,
            initial_nbar: vec![0.0; n_modes],
            crosstalk_ratio: 0.0,
            spam_error: vec![0.0; n_ions],
            thermal_truncation_tol: 1e-3,
        }
    }

    pub fn validate(&self, n_ions: usize, n_modes: usize) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        for (name, len) in [
            ("heating_rate", self.heating_rate.len()),
            ("motional_coherence_time", self.motional_coherence_time.len()),
            ("initial_nbar", self.initial_nbar.len()),
        ] {
            if len != n_modes {
                return bad(format!("{name} has {len} entries for {n_modes} modes"));
            }
        }
        if self.spam_error.len() != n_ions {
            return bad(format!("spam_error has {} entries for {n_ions} ions", self.spam_error.len()));
        }
        if self.heating_rate.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("heating rates must be non-negative".into());
        }
        if self.initial_nbar.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("initial_nbar must be non-negative".into());
        }
        let times = self.motional_coherence_time.iter().chain(std::iter::once(&self.zeeman_coherence_time));
        if times.flatten().any(|t| !(*t > 0.0)) {
            return bad("coherence times must be positive".into());
        }
        if !(self.crosstalk_ratio >= 0.0 && self.crosstalk_ratio.is_finite()) {
            return bad("crosstalk_ratio must be non-negative".into());
        }
        if self.spam_error.iter().any(|e| !(0.0..0.5).contains(e)) {
            return bad("spam_error must lie in [0, 0.5)".into());
        }
        if !(self.thermal_truncation_tol > 0.0) {
            return bad("thermal_truncation_tol must be positive".into());
        }
        Ok(())
    }

    pub fn spam_for(&self, ions: &[usize]) -> Vec<f64> {
        ions.iter().map(|&i| self.spam_error.get(i).copied().unwrap_or(0.0)).collect()
    }
}

/// Lindblad operators for the modes in `included_modes` (chain mode index of
/// each layout mode site) and every ion of the layout.
pub fn collapse_operators(noise: &NoiseModel, layout: &HilbertLayout, included_modes: &[usize]) -> Result<Vec<LinearOperator>> {
    if included_modes.len() != layout.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_modes(),
            found: included_modes.len(),
        });
    }
    let mut ops = Vec::new();
    for (k, &m) in included_modes.iter().enumerate() {
        let cut = layout.mode_cutoffs()[k];
        let site = layout.mode_site(k);
        let rate = *noise
            .heating_rate
            .get(m)
            .ok_or_else(|| Error::InvalidArgument(format!("no heating rate for mode {m}")))?;
        if rate > 0.0 {
            let a = annihilation(cut);
            let s = C64::new(rate.sqrt(), 0.0);
            ops.push(embed_site_operator(layout, site, &(a.adjoint() * s))?);
            ops.push(embed_site_operator(layout, site, &(a * s))?);
        }
        if let Some(Some(tau)) = noise.motional_coherence_time.get(m) {
            let s = C64::new((2.0 / tau).sqrt(), 0.0);
            ops.push(embed_site_operator(layout, site, &(number(cut) * s))?);
        }
    }
    if let Some(tau) = noise.zeeman_coherence_time {
        let s = C64::new((2.0 / tau).sqrt(), 0.0);
        for i in 0..layout.n_ions() {
            ops.push(embed_site_operator(layout, layout.ion_site(i), &(projector(ION_DIM, 2) * s))?);
        }
    }
    Ok(ops)
}

/// Same operators in CSR form, dropping zero operators.
pub fn collapse_csr(noise: &NoiseModel, layout: &HilbertLayout, included_modes: &[usize]) -> Result<Vec<CsrMatrix>> {
    Ok(collapse_operators(noise, layout, included_modes)?
        .iter()
        .map(LinearOperator::to_sparse)
        .filter(|c| c.nnz() > 0)
        .collect())
}

/// Input label of one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpinLabel {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl SpinLabel {
    pub fn vector(self) -> Vec<C64> {
        let r = FRAC_1_SQRT_2;
        let (a, b) = match self {
            SpinLabel::Zero => (1.0, 0.0),
            SpinLabel::One => (0.0, 1.0),
            SpinLabel::Plus => (r, r),
            SpinLabel::Minus => (r, -r),
        };
        vec![C64::new(a, 0.0), C64::new(b, 0.0), C64::new(0.0, 0.0)]
    }

    pub fn as_char(self) -> char {
        match self {
            SpinLabel::Zero => '0',
            SpinLabel::One => '1',
            SpinLabel::Plus => '+',
            SpinLabel::Minus => '-',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        Ok(match c {
            '0' => SpinLabel::Zero,
            '1' => SpinLabel::One,
            '+' => SpinLabel::Plus,
            '-' => SpinLabel::Minus,
            _ => return Err(Error::InvalidArgument(format!("unknown spin label {c:?}"))),
        })
    }
}

impl fmt::Display for SpinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

pub fn parse_labels(s: &str) -> Result<Vec<SpinLabel>> {
    s.chars().map(SpinLabel::from_char).collect()
}

pub fn format_labels(labels: &[SpinLabel]) -> String {
    labels.iter().map(|l| l.as_char()).collect()
}

impl FromStr for SpinLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => Self::from_char(c),
            _ => Err(Error::InvalidArgument(format!("unknown spin label {s:?}"))),
        }
    }
}

/// Truncated geometric distribution and the discarded tail weight.
pub fn thermal_distribution(nbar: f64, cutoff: usize) -> (Vec<f64>, f64) {
    if nbar == 0.0 {
        let mut p = vec![0.0; cutoff];
        p[0] = 1.0;
        return (p, 0.0);
    }
    let q = nbar / (1.0 + nbar);
    let p: Vec<f64> = (0..cutoff).map(|n| q.powi(n as i32) / (1.0 + nbar)).collect();
    let lost = q.powi(cutoff as i32);
    let z: f64 = p.iter().sum();
    (p.into_iter().map(|x| x / z).collect(), lost)
}

fn checked_thermal(noise: &NoiseModel, mode: usize, cutoff: usize) -> Result<Vec<f64>> {
    let nbar = *noise
        .initial_nbar
        .get(mode)
        .ok_or_else(|| Error::InvalidArgument(format!("no initial_nbar for mode {mode}")))?;
    let (p, lost) = thermal_distribution(nbar, cutoff);
    if lost > noise.thermal_truncation_tol {
        return Err(Error::CutoffTooSmall { mode, cutoff, nbar, lost });
    }
    Ok(p)
}

/// Product of pure spin states and thermal phonon states, as a density matrix.
pub fn initial_state(labels: &[SpinLabel], noise: &NoiseModel, layout: &HilbertLayout, included_modes: &[usize]) -> Result<QuantumState> {
    if labels.len() != layout.n_ions() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_ions(),
            found: labels.len(),
        });
    }
    if included_modes.len() != layout.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_modes(),
            found: included_modes.len(),
        });
    }
    layout.check_density_cap()?;
    let spin: Vec<C64> = labels.iter().fold(vec![C64::new(1.0, 0.0)], |acc, l| {
        let v = l.vector();
        acc.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect()
    });
    let mut rho = DMatrix::from_fn(spin.len(), spin.len(), |r, c| spin[r] * spin[c].conj());
    for (k, &m) in included_modes.iter().enumerate() {
        let p = checked_thermal(noise, m, layout.mode_cutoffs()[k])?;
        let local = DMatrix::from_fn(p.len(), p.len(), |r, c| if r == c { C64::new(p[r], 0.0) } else { C64::new(0.0, 0.0) });
        rho = rho.kronecker(&local);
    }
    QuantumState::density(layout.clone(), rho)
}

/// Thermal phonon configurations as (weight, Fock occupation per included mode),
/// dropping configurations lighter than `min_weight`.
pub fn fock_ensemble(noise: &NoiseModel, layout: &HilbertLayout, included_modes: &[usize], min_weight: f64) -> Result<Vec<(f64, Vec<usize>)>> {
    let mut out = vec![(1.0, Vec::new())];
    for (k, &m) in included_modes.iter().enumerate() {
        let p = checked_thermal(noise, m, layout.mode_cutoffs()[k])?;
        out = out
            .into_iter()
            .flat_map(|(w, occ)| {
                p.iter().enumerate().map(move |(n, pn)| {
                    let mut o = occ.clone();
                    o.push(n);
                    (w * pn, o)
                })
            })
            .filter(|(w, _)| *w >= min_weight)
            .collect();
    }
    let z: f64 = out.iter().map(|(w, _)| w).sum();
    Ok(out.into_iter().map(|(w, o)| (w / z, o)).collect())
}

/// Pure product state with the given spin labels and Fock occupations.
pub fn pure_product_state(labels: &[SpinLabel], fock: &[usize], layout: &HilbertLayout) -> Result<QuantumState> {
    if labels.len() != layout.n_ions() || fock.len() != layout.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_sites(),
            found: labels.len() + fock.len(),
        });
    }
    let mut sites: Vec<Vec<C64>> = labels.iter().map(|l| l.vector()).collect();
    for (k, &n) in fock.iter().enumerate() {
        let cut = layout.mode_cutoffs()[k];
        if n >= cut {
            return Err(Error::InvalidArgument(format!("Fock level {n} exceeds cutoff {cut}")));
        }
        let mut v = vec![C64::new(0.0, 0.0); cut];
        v[n] = C64::new(1.0, 0.0);
        sites.push(v);
    }
    QuantumState::product(layout.clone(), &sites)
}

/// Applies the per-qubit symmetric readout confusion (or its inverse) to a
/// distribution over bitstrings, qubit 0 being the most significant bit.
pub fn spam_channel(populations: &[f64], spam_error: &[f64], invert: bool) -> Result<Vec<f64>> {
    check_spam_input(populations, spam_error)?;
    let mut p = confusion(populations, spam_error, invert);
    if invert {
        if let Some(m) = p.iter().copied().find(|x| *x < -1e-6) {
            return Err(Error::Numerical(format!(
                "SPAM inversion produced probability {m:.3e}; input inconsistent with the error model"
            )));
        }
        clip_normalise(&mut p);
    }
    Ok(p)
}

/// Inverse confusion for sampled frequencies, where shot noise can push
/// entries negative; those are clipped to zero before renormalising.
pub fn spam_inverse_clipped(frequencies: &[f64], spam_error: &[f64]) -> Result<Vec<f64>> {
    check_spam_input(frequencies, spam_error)?;
    let mut p = confusion(frequencies, spam_error, true);
    clip_normalise(&mut p);
    Ok(p)
}

fn check_spam_input(populations: &[f64], spam_error: &[f64]) -> Result<()> {
    let n = spam_error.len();
    if populations.len() != 1usize << n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            found: populations.len(),
        });
    }
    if populations.iter().any(|p| *p < -1e-12) || (populations.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("populations must be a normalised distribution".into()));
    }
    if let Some(e) = spam_error.iter().find(|e| !(0.0..0.5).contains(*e)) {
        return Err(Error::InvalidArgument(format!("SPAM error {e} outside [0, 0.5)")));
    }
    Ok(())
}

fn confusion(populations: &[f64], spam_error: &[f64], invert: bool) -> Vec<f64> {
    let n = spam_error.len();
    let mut p = populations.to_vec();
    for (q, &eps) in spam_error.iter().enumerate() {
        if eps == 0.0 {
            continue;
        }
        let (keep, flip) = if invert {
            let s = 1.0 / (1.0 - 2.0 * eps);
            ((1.0 - eps) * s, -eps * s)
        } else {
            (1.0 - eps, eps)
        };
        let stride = 1usize << (n - 1 - q);
        for i in 0..p.len() {
            if i & stride == 0 {
                let (a, b) = (p[i], p[i | stride]);
                p[i] = keep * a + flip * b;
                p[i | stride] = flip * a + keep * b;
            }
        }
    }
    p
}

fn clip_normalise(p: &mut [f64]) {
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{expectation, Liouvillian, propagate_density, EvolutionSettings};
    use proptest::prelude::*;

    #[test]
    fn zero_rates_give_no_operators() {
        let l = HilbertLayout::new(2, vec![3]).unwrap();
        let n = NoiseModel::noiseless(2, 1);
        assert!(collapse_operators(&n, &l, &[0]).unwrap().is_empty());
    }

    #[test]
    fn thermal_weights() {
        let (p, _) = thermal_distribution(0.0, 4);
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
        let (p, lost) = thermal_distribution(0.5, 40);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 2.0 / 9.0).abs() < 1e-12);
        assert!(lost < 1e-15);
        let (p, _) = thermal_distribution(0.02, 20);
        assert!((p[0] - 1.0 / 1.02).abs() < 1e-9);
    }

    #[test]
    fn truncation_guard() {
        let l = HilbertLayout::new(1, vec![4]).unwrap();
        let mut n = NoiseModel::noiseless(1, 1);
        n.initial_nbar = vec![0.5];
        let err = initial_state(&[SpinLabel::Zero], &n, &l, &[0]).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { .. }));
        n.thermal_truncation_tol = 0.02;
        let s = initial_state(&[SpinLabel::Zero], &n, &l, &[0]).unwrap();
        assert!((s.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_mean_within_tail_bound() {
        for &(nbar, cut) in &[(0.02, 5usize), (0.5, 12), (1.3, 40)] {
            let (p, lost) = thermal_distribution(nbar, cut);
            let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
            // The discarded tail carries mean weight lost * (cut + nbar + 1) at most.
            assert!((mean - nbar).abs() <= lost * (cut as f64 + nbar + 1.0) + 1e-12);
        }
    }

    fn evolve_free(noise: &NoiseModel, cut: usize, rho0: DMatrix<C64>, t: f64) -> DMatrix<C64> {
        let l = HilbertLayout::new(0, vec![cut]).unwrap();
        let c = collapse_csr(noise, &l, &[0]).unwrap();
        let liou = Liouvillian::new(&CsrMatrix::zeros(cut), &c).unwrap();
        propagate_density(&liou, t, &rho0, &EvolutionSettings::default()).unwrap()
    }

    #[test]
    fn heating_grows_linearly() {
        let cut = 30;
        let mut n = NoiseModel::noiseless(0, 1);
        n.heating_rate = vec![COM_HEATING_RATE];
        let mut rho = DMatrix::zeros(cut, cut);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let out = evolve_free(&n, cut, rho, 1e-3);
        let l = HilbertLayout::new(0, vec![cut]).unwrap();
        let st = QuantumState::density_unchecked(l.clone(), out).unwrap();
        let num = embed_site_operator(&l, 0, &number(cut)).unwrap();
        let mean = expectation(&st, &num).unwrap().re;
        assert!((mean - 0.614).abs() < 1e-3, "mean {mean}");
        assert!((st.trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn motional_dephasing_decay() {
        let cut = 3;
        let mut n = NoiseModel::noiseless(0, 1);
        n.motional_coherence_time = vec![Some(MOTIONAL_COHERENCE_TIME)];
        let mut rho = DMatrix::zeros(cut, cut);
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            rho[(r, c)] = C64::new(0.5, 0.0);
        }
        let out = evolve_free(&n, cut, rho, MOTIONAL_COHERENCE_TIME);
        assert!((out[(0, 1)].norm() - 0.5 * (-1f64).exp()).abs() < 1e-4);
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zeeman_dephasing_decay() {
        let mut n = NoiseModel::noiseless(1, 0);
        n.zeeman_coherence_time = Some(ZEEMAN_COHERENCE_TIME);
        let l = HilbertLayout::new(1, vec![]).unwrap();
        let c = collapse_csr(&n, &l, &[]).unwrap();
        let liou = Liouvillian::new(&CsrMatrix::zeros(3), &c).unwrap();
        let rho = DMatrix::from_element(3, 3, C64::new(1.0 / 3.0, 0.0));
        let out = propagate_density(&liou, ZEEMAN_COHERENCE_TIME, &rho, &EvolutionSettings::default()).unwrap();
        let e = (-1f64).exp() / 3.0;
        assert!((out[(0, 2)].norm() - e).abs() < 1e-10);
        assert!((out[(1, 2)].norm() - e).abs() < 1e-10);
        assert!((out[(0, 1)].norm() - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn spam_examples() {
        let mut delta = vec![0.0; 8];
        delta[7] = 1.0;
        assert_eq!(spam_channel(&delta, &[0.0; 3], false).unwrap(), delta);
        let p = spam_channel(&delta, &[0.005; 3], false).unwrap();
        assert!((p[7] - 0.995f64.powi(3)).abs() < 1e-12);
        assert!((p[7] - 0.98507).abs() < 1e-5);
        assert!(spam_channel(&delta, &[0.5; 3], false).is_err());
    }

    #[test]
    fn inconsistent_spam_inversion_is_rejected() {
        let mut delta = vec![0.0; 4];
        delta[3] = 1.0;
        assert!(matches!(spam_channel(&delta, &[0.1, 0.1], true), Err(Error::Numerical(_))));
    }

    #[test]
    fn labels_round_trip() {
        let l = parse_labels("01+-").unwrap();
        assert_eq!(format_labels(&l), "01+-");
        assert!(parse_labels("2").is_err());
    }

    proptest! {
        #[test]
        fn spam_round_trip(raw in proptest::collection::vec(0.0f64..1.0, 8), eps in proptest::collection::vec(0.0f64..0.2, 3)) {
            let z: f64 = raw.iter().sum::<f64>() + 1e-9;
            let p: Vec<f64> = raw.iter().map(|x| (x + 1e-9 / 8.0) / z).collect();
            let fwd = spam_channel(&p, &eps, false).unwrap();
            prop_assert!((fwd.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let back = spam_channel(&fwd, &eps, true).unwrap();
            for (a, b) in back.iter().zip(&p) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn dephasing_keeps_populations(seed in 0u64..1000) {
            let cut = 4;
            let mut n = NoiseModel::noiseless(0, 1);
            n.motional_coherence_time = vec![Some(1e-3)];
            let mut rho = DMatrix::from_fn(cut, cut, |r, c| C64::new(((seed as usize + r * 7 + c * 3) % 5) as f64, 0.0));
            rho = &rho * rho.adjoint();
            let tr = rho.trace();
            rho /= tr;
            let out = evolve_free(&n, cut, rho.clone(), 2e-3);
            for i in 0..cut {
                prop_assert!((out[(i, i)] - rho[(i, i)]).norm() < 1e-10);
            }
        }
    }
}
