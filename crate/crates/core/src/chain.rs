//! Equilibrium configuration and transverse normal modes of a linear ion chain.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const YB171_MASS_U: f64 = 170.936_325_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSpec {
    pub n_ions: usize,
    /// Axial trap frequency (rad/s).
    pub axial_freq: f64,
    /// Radial trap frequency (rad/s); equals the transverse COM frequency.
    pub radial_freq: f64,
    /// Ion mass (kg).
    pub ion_mass: f64,
    /// Effective Raman wavevector difference along the mode axis (1/m).
    pub raman_wavevector: f64,
    /// Newton iteration budget for the equilibrium search.
    pub max_newton_steps: usize,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            n_ions: 5,
            axial_freq: 2.0 * PI * 0.5e6,
            radial_freq: 2.0 * PI * 3.0e6,
            ion_mass: YB171_MASS_U * ATOMIC_MASS_UNIT,
            raman_wavevector: 2f64.sqrt() * 2.0 * PI / 355e-9,
            max_newton_steps: 200,
        }
    }
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidArgument("chain needs at least one ion".into()));
        }
        for (name, v) in [
            ("axial_freq", self.axial_freq),
            ("radial_freq", self.radial_freq),
            ("ion_mass", self.ion_mass),
            ("raman_wavevector", self.raman_wavevector),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Characteristic length (e^2 / (4 pi eps0 M wz^2))^(1/3) in metres.
    pub fn length_scale(&self) -> f64 {
        (ELEMENTARY_CHARGE.powi(2) / (4.0 * PI * VACUUM_PERMITTIVITY * self.ion_mass * self.axial_freq.powi(2)))
            .cbrt()
    }
}

/// Transverse normal modes, mode 0 being the highest-frequency (COM) mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStructure {
    /// Angular frequencies (rad/s), descending.
    pub frequencies: Vec<f64>,
    /// `participation[ion][mode]`, orthogonal.
    pub participation: Vec<Vec<f64>>,
    /// `lamb_dicke[ion][mode]`.
    pub lamb_dicke: Vec<Vec<f64>>,
}

impl ModeStructure {
    pub fn n_ions(&self) -> usize {
        self.participation.len()
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn eta(&self, ion: usize, mode: usize) -> f64 {
        self.lamb_dicke[ion][mode]
    }

    /// Largest |eta| on `mode` among `ions`.
    pub fn max_abs_eta(&self, mode: usize, ions: &[usize]) -> f64 {
        ions.iter().map(|&i| self.lamb_dicke[i][mode].abs()).fold(0.0, f64::max)
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::InvalidArgument(format!(
                "mode {mode} out of range for {} modes",
                self.n_modes()
            )));
        }
        Ok(())
    }
}

/// Dimensionless force on each ion; zero at equilibrium.
fn force(u: &[f64]) -> DVector<f64> {
    let n = u.len();
    DVector::from_fn(n, |i, _| {
        let mut f = u[i];
        for (j, &uj) in u.iter().enumerate() {
            if j != i {
                let d = u[i] - uj;
                f -= d.signum() / (d * d);
            }
        }
        f
    })
}

fn force_jacobian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = 1.0;
        for j in 0..n {
            if j != i {
                let k = 2.0 / (u[i] - u[j]).abs().powi(3);
                jac[(i, i)] += k;
                jac[(i, j)] = -k;
            }
        }
    }
    jac
}

/// Equilibrium positions in units of the characteristic length.
pub fn dimensionless_positions(n: usize, max_steps: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one ion".into()));
    }
    let mid = (n as f64 + 1.0) / 2.0;
    let mut u: Vec<f64> = (1..=n).map(|j| 2.0 * (j as f64 - mid) / n as f64).collect();
    let mut f = force(&u);
    let mut steps = 0;
    while f.norm() >= 1e-12 {
        if steps == max_steps {
            return Err(Error::NoConvergence {
                iterations: steps,
                residual: f.norm(),
            });
        }
        steps += 1;
        let dx = force_jacobian(&u)
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Numerical("singular Jacobian in the equilibrium search".into()))?;
        // Backtrack until the ordering is kept and the residual drops.
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(dx.iter()).map(|(x, d)| x - lambda * d).collect();
            let ordered = trial.windows(2).all(|w| w[0] < w[1]);
            if ordered {
                let ft = force(&trial);
                if ft.norm() < f.norm() || lambda < 1e-6 {
                    u = trial;
                    f = ft;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: steps,
                    residual: f.norm(),
                });
            }
        }
    }
    // The minimiser is mirror symmetric; remove the residual asymmetry.
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    Ok(sym)
}

/// Axial equilibrium positions (m), ascending.
pub fn equilibrium_positions(spec: &ChainSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let l = spec.length_scale();
    Ok(dimensionless_positions(spec.n_ions, spec.max_newton_steps)?
        .into_iter()
        .map(|u| u * l)
        .collect())
}

pub fn transverse_modes(spec: &ChainSpec) -> Result<ModeStructure> {
    spec.validate()?;
    let n = spec.n_ions;
    let u = dimensionless_positions(n, spec.max_newton_steps)?;
    let wx2 = spec.radial_freq.powi(2);
    let wz2 = spec.axial_freq.powi(2);
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = wx2;
        for j in 0..n {
            if j != i {
                let c = wz2 / (u[i] - u[j]).abs().powi(3);
                k[(i, i)] -= c;
                k[(i, j)] = c;
            }
        }
    }
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut frequencies = Vec::with_capacity(n);
    let mut participation = vec![vec![0.0; n]; n];
    for (m, &idx) in order.iter().enumerate() {
        let w2 = eig.eigenvalues[idx];
        if w2 <= 0.0 {
            return Err(Error::UnstableMode { mode: m, omega_sq: w2 });
        }
        frequencies.push(w2.sqrt());
        let col = eig.eigenvectors.column(idx);
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map(|v| v.signum())
            .unwrap_or(1.0);
        for j in 0..n {
            participation[j][m] = sign * col[j];
        }
    }
    let lamb_dicke = participation
        .iter()
        .map(|row| {
            row.iter()
                .zip(&frequencies)
                .map(|(b, w)| b * spec.raman_wavevector * (HBAR / (2.0 * spec.ion_mass * w)).sqrt())
                .collect()
        })
        .collect();
    Ok(ModeStructure {
        frequencies,
        participation,
        lamb_dicke,
    })
}

/// Bus mode and gate ions chosen for an `n`-qubit gate (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusSelection {
    pub mode: usize,
    pub ions: Vec<usize>,
}

/// The `n` ions with the largest |eta| on `mode`, returned ascending.
pub fn strongest_ions(modes: &ModeStructure, mode: usize, n: usize) -> Vec<usize> {
    let scale = modes.max_abs_eta(mode, &(0..modes.n_ions()).collect::<Vec<_>>());
    let mut ions: Vec<usize> = (0..modes.n_ions()).collect();
    ions.sort_by(|&a, &b| {
        let (ea, eb) = (modes.eta(a, mode).abs(), modes.eta(b, mode).abs());
        if (ea - eb).abs() <= 1e-9 * scale {
            a.cmp(&b)
        } else {
            eb.total_cmp(&ea)
        }
    });
    ions.truncate(n);
    ions.sort_unstable();
    ions
}

pub fn select_bus_mode(modes: &ModeStructure, n_gate_qubits: usize) -> Result<BusSelection> {
    let n_ions = modes.n_ions();
    if n_gate_qubits == 0 || n_gate_qubits > n_ions {
        return Err(Error::InvalidArgument(format!(
            "cannot select {n_gate_qubits} gate ions from a chain of {n_ions}"
        )));
    }
    if n_ions == 5 && (3..=5).contains(&n_gate_qubits) {
        // Zig-zag for three, fourth mode for four, third mode for five ions.
        let mode = 7 - n_gate_qubits;
        return Ok(BusSelection {
            mode,
            ions: strongest_ions(modes, mode, n_gate_qubits),
        });
    }
    if n_ions == 1 {
        return Ok(BusSelection { mode: 0, ions: vec![0] });
    }
    let mut best: Option<(f64, BusSelection)> = None;
    for mode in 1..modes.n_modes() {
        let ions = strongest_ions(modes, mode, n_gate_qubits);
        let weakest = ions.iter().map(|&i| modes.eta(i, mode).abs()).fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(w, _)| weakest > *w * (1.0 + 1e-9)) {
            best = Some((weakest, BusSelection { mode, ions }));
        }
    }
    Ok(best.expect("chain with more than one ion has a non-COM mode").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n: usize) -> ChainSpec {
        ChainSpec {
            n_ions: n,
            ..ChainSpec::default()
        }
    }

    #[test]
    fn single_ion() {
        assert_eq!(equilibrium_positions(&spec(1)).unwrap(), vec![0.0]);
        let m = transverse_modes(&spec(1)).unwrap();
        assert!((m.frequencies[0] / spec(1).radial_freq - 1.0).abs() < 1e-12);
        assert_eq!(m.participation, vec![vec![1.0]]);
    }

    #[test]
    fn two_and_three_ion_positions() {
        let u = dimensionless_positions(2, 200).unwrap();
        let a = 2f64.powf(-2.0 / 3.0);
        assert!((u[1] / a - 1.0).abs() < 1e-12 && (u[0] / a + 1.0).abs() < 1e-12);
        let u = dimensionless_positions(3, 200).unwrap();
        let a = 1.25f64.cbrt();
        assert!((u[2] / a - 1.0).abs() < 1e-12);
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn two_ion_modes_are_analytic() {
        let s = spec(2);
        let m = transverse_modes(&s).unwrap();
        let rock = (s.radial_freq.powi(2) - s.axial_freq.powi(2)).sqrt();
        assert!((m.frequencies[0] / s.radial_freq - 1.0).abs() < 1e-12);
        assert!((m.frequencies[1] / rock - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.participation[0][1] - r).abs() < 1e-12);
        assert!((m.participation[1][1] + r).abs() < 1e-12);
    }

    #[test]
    fn five_ion_structure() {
        let m = transverse_modes(&spec(5)).unwrap();
        for j in 0..5 {
            assert!((m.participation[j][0] - 1.0 / 5f64.sqrt()).abs() < 1e-10);
        }
        let signs: Vec<f64> = (0..5).map(|j| m.participation[j][4].signum()).collect();
        assert_eq!(signs, vec![1.0, -1.0, 1.0, -1.0, 1.0]);
        // Mode 4 (index 3) is antisymmetric: the end ions match in magnitude and the centre ion is a node.
        assert!((m.participation[0][3].abs() - m.participation[4][3].abs()).abs() < 1e-10);
        assert!(m.participation[2][3].abs() < 1e-10);
        // The zig-zag is carried mostly by the three centre ions.
        let centre: f64 = (1..4).map(|j| m.participation[j][4].powi(2)).sum();
        assert!(centre > 0.9);
    }

    #[test]
    fn five_ion_bus_selection() {
        let m = transverse_modes(&spec(5)).unwrap();
        assert_eq!(select_bus_mode(&m, 3).unwrap(), BusSelection { mode: 4, ions: vec![1, 2, 3] });
        assert_eq!(select_bus_mode(&m, 4).unwrap(), BusSelection { mode: 3, ions: vec![0, 1, 3, 4] });
        assert_eq!(select_bus_mode(&m, 5).unwrap(), BusSelection { mode: 2, ions: vec![0, 1, 2, 3, 4] });
        assert!(select_bus_mode(&m, 6).is_err());
    }

    #[test]
    fn general_rule_avoids_com() {
        let m = transverse_modes(&spec(4)).unwrap();
        let sel = select_bus_mode(&m, 2).unwrap();
        assert_ne!(sel.mode, 0);
        assert_eq!(sel.ions.len(), 2);
    }

    #[test]
    fn unstable_chain_is_reported() {
        let s = ChainSpec {
            n_ions: 10,
            radial_freq: 2.0 * PI * 0.6e6,
            ..ChainSpec::default()
        };
        assert!(matches!(transverse_modes(&s), Err(Error::UnstableMode { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mode_invariants(n in 1usize..9) {
            let s = spec(n);
            let m = transverse_modes(&s).unwrap();
            let b = DMatrix::from_fn(n, n, |j, k| m.participation[j][k]);
            prop_assert!((b.transpose() * &b - DMatrix::identity(n, n)).abs().max() < 1e-10);
            for j in 0..n {
                let sum: f64 = m.participation[j].iter().map(|x| x * x).sum();
                prop_assert!((sum - 1.0).abs() < 1e-10);
            }
            prop_assert!(m.frequencies.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((m.frequencies[0] / s.radial_freq - 1.0).abs() < 1e-10);
            for k in 0..n {
                let even = (0..n).all(|j| (m.participation[j][k] - m.participation[n - 1 - j][k]).abs() < 1e-9);
                let odd = (0..n).all(|j| (m.participation[j][k] + m.participation[n - 1 - j][k]).abs() < 1e-9);
                prop_assert!(even || odd);
                for j in 0..n {
                    let expect = m.participation[j][k] * s.raman_wavevector * (HBAR / (2.0 * s.ion_mass * m.frequencies[k])).sqrt();
                    prop_assert!((m.lamb_dicke[j][k] - expect).abs() < 1e-15);
                }
            }
            let u = dimensionless_positions(n, 200).unwrap();
            prop_assert!(force(&u).norm() < 1e-10);
            prop_assert!(u.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn scale_covariance(n in 2usize..7, lambda in 0.5f64..2.0) {
            let s = spec(n);
            let scaled = ChainSpec { axial_freq: s.axial_freq * lambda, radial_freq: s.radial_freq * lambda, ..s.clone() };
            let a = transverse_modes(&s).unwrap();
            let b = transverse_modes(&scaled).unwrap();
            for k in 0..n {
                prop_assert!((b.frequencies[k] / (lambda * a.frequencies[k]) - 1.0).abs() < 1e-9);
                for j in 0..n {
                    prop_assert!((a.participation[j][k] - b.participation[j][k]).abs() < 1e-9);
                }
            }
        }
    }
}
