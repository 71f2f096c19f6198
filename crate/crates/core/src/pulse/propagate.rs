use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::hamiltonian::{build_hamiltonian, RotatingGenerator};
use super::{Method, PropagationSettings, PulseSpec, Stepping, SystemModel};
use crate::error::{Error, Result};
use crate::noise::{collapse_csr, NoiseModel};
use crate::tensor::{
    dense_unitary, expv, propagate_vector, BlockSpectrum, CsrMatrix, EvolutionSettings, LinearOperator, Liouvillian,
    QuantumState, StateData,
};

/// Trace drift tolerated per pulse in density-matrix propagation.
pub const TRACE_TOL: f64 = 1e-9;

/// A pulse with its generators assembled for one system and noise model.
#[derive(Debug, Clone)]
pub struct PreparedPulse {
    pub pulse: PulseSpec,
    pub generator: RotatingGenerator,
    h: LinearOperator,
    dense: Option<DMatrix<C64>>,
    spectrum: Option<BlockSpectrum>,
    liouvillian: Option<Liouvillian>,
    effective: Option<BlockSpectrum>,
}

impl PreparedPulse {
    pub fn duration(&self) -> f64 {
        self.generator.duration
    }

    pub fn hamiltonian(&self) -> &LinearOperator {
        &self.h
    }

    pub fn liouvillian(&self) -> Option<&Liouvillian> {
        self.liouvillian.as_ref()
    }

    /// Block eigendecomposition of the no-jump generator, when available.
    pub fn effective_spectrum(&self) -> Option<&BlockSpectrum> {
        self.effective.as_ref()
    }
}

/// Block decomposition if every block fits; `None` sends the caller to Krylov.
fn try_spectrum(a: &CsrMatrix, hermitian: bool, max_block: usize) -> Option<BlockSpectrum> {
    if max_block == 0 {
        return None;
    }
    BlockSpectrum::new(a, hermitian, max_block).ok()
}

/// A pulse list ready to propagate pure states, density matrices or trajectories.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    pub system: SystemModel,
    pub pulses: Vec<PreparedPulse>,
    pub collapse: Vec<CsrMatrix>,
    pub crosstalk: f64,
    pub settings: PropagationSettings,
}

fn apply_diag(v: &mut [C64], phase: &[C64]) {
    for (x, p) in v.iter_mut().zip(phase) {
        *x *= p;
    }
}

fn apply_diag_density(rho: &mut DMatrix<C64>, phase: &[C64]) {
    let d = rho.nrows();
    for c in 0..d {
        let pc = phase[c].conj();
        for r in 0..d {
            rho[(r, c)] *= phase[r] * pc;
        }
    }
}

fn trace(rho: &DMatrix<C64>) -> f64 {
    (0..rho.nrows()).map(|i| rho[(i, i)].re).sum()
}

impl PreparedSequence {
    pub fn new(pulses: &[PulseSpec], system: &SystemModel, noise: &NoiseModel, settings: &PropagationSettings) -> Result<Self> {
        noise.validate(system.structure.n_ions(), system.structure.n_modes())?;
        Self::build(pulses, system, noise.crosstalk_ratio, noise, settings)
    }

    /// Noise-free sequence (no crosstalk, no dissipation).
    pub fn noiseless(pulses: &[PulseSpec], system: &SystemModel, settings: &PropagationSettings) -> Result<Self> {
        let noise = NoiseModel::noiseless(system.structure.n_ions(), system.structure.n_modes());
        Self::build(pulses, system, 0.0, &noise, settings)
    }

    fn build(pulses: &[PulseSpec], system: &SystemModel, crosstalk: f64, noise: &NoiseModel, settings: &PropagationSettings) -> Result<Self> {
        let layout = &system.layout;
        let collapse = match settings.method {
            Method::Unitary => Vec::new(),
            _ => collapse_csr(noise, layout, &system.modes)?,
        };
        let settings = &PropagationSettings {
            method: settings.effective_method(layout.dim(), !collapse.is_empty()),
            ..settings.clone()
        };
        if settings.method == Method::Lindblad {
            layout.check_density_cap()?;
        }
        if settings.method == Method::Trajectories && settings.stepping == Stepping::PiecewiseMidpoint {
            return Err(Error::InvalidArgument("trajectories require exact stepping".into()));
        }
        let d = layout.dim();
        let mut prepared = Vec::with_capacity(pulses.len());
        for p in pulses {
            let generator = RotatingGenerator::new(p, system, crosstalk)?;
            let max_det = generator.max_detuning();
            if let Some(dt) = settings.time_step {
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
                }
                if max_det > 0.0 && dt > 1.0 / (20.0 * max_det) {
                    return Err(Error::StepTooLarge {
                        step: dt,
                        limit: 1.0 / (20.0 * max_det),
                    });
                }
            }
            let h = LinearOperator::from_sparse(generator.h.clone());
            let dense = if d <= settings.evolution.dense_threshold && settings.stepping == Stepping::Exact {
                let mut u = dense_unitary(&generator.h.to_dense(), generator.duration);
                if let Some(phase) = generator.post_phase() {
                    for (r, p) in phase.iter().enumerate() {
                        let mut row = u.row_mut(r);
                        row *= *p;
                    }
                }
                Some(u)
            } else {
                None
            };
            let max_block = settings.evolution.max_block;
            let spectrum = if dense.is_none() && settings.stepping == Stepping::Exact && settings.method != Method::Lindblad {
                try_spectrum(&generator.h, true, max_block)
            } else {
                None
            };
            let liouvillian = match settings.method {
                Method::Unitary => None,
                _ => Some(Liouvillian::new(&generator.h, &collapse)?),
            };
            let effective = match (&liouvillian, settings.method) {
                (Some(l), Method::Trajectories) => try_spectrum(l.effective_hamiltonian(), false, max_block),
                _ => None,
            };
            prepared.push(PreparedPulse {
                pulse: p.clone(),
                generator,
                h,
                dense,
                spectrum,
                liouvillian,
                effective,
            });
        }
        Ok(Self {
            system: system.clone(),
            pulses: prepared,
            collapse,
            crosstalk,
            settings: settings.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.system.layout.dim()
    }

    pub fn total_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.duration()).sum()
    }

    fn evolution(&self) -> &EvolutionSettings {
        &self.settings.evolution
    }

    fn steps(&self, p: &PreparedPulse) -> (usize, f64) {
        let t = p.duration();
        let max_det = p.generator.max_detuning();
        let dt = self
            .settings
            .time_step
            .unwrap_or(if max_det > 0.0 { 1.0 / (20.0 * max_det) } else { t });
        let n = (t / dt).ceil().max(1.0) as usize;
        (n, t / n as f64)
    }

    fn midpoint_hamiltonian(&self, p: &PreparedPulse, t: f64) -> Result<LinearOperator> {
        build_hamiltonian(&p.pulse, &self.system, self.crosstalk, t)
    }

    /// Propagates a pure state through pulse `k`.
    pub fn apply_pure(&self, k: usize, psi: &[C64]) -> Result<Vec<C64>> {
        let p = &self.pulses[k];
        match self.settings.stepping {
            Stepping::Exact => {
                if let Some(u) = &p.dense {
                    return Ok((u * DVector::from_column_slice(psi)).as_slice().to_vec());
                }
                let mut out = match &p.spectrum {
                    Some(s) => s.apply(C64::new(0.0, -1.0), p.duration(), psi)?,
                    None => propagate_vector(&p.h, p.duration(), psi, self.evolution())?,
                };
                if let Some(phase) = p.generator.post_phase() {
                    apply_diag(&mut out, &phase);
                }
                Ok(out)
            }
            Stepping::PiecewiseMidpoint => {
                let (n, dt) = self.steps(p);
                let mut out = psi.to_vec();
                for s in 0..n {
                    let h = self.midpoint_hamiltonian(p, (s as f64 + 0.5) * dt)?;
                    out = propagate_vector(&h, dt, &out, self.evolution())?;
                }
                if let Some(phase) = p.generator.residual_phase() {
                    apply_diag(&mut out, &phase);
                }
                Ok(out)
            }
        }
    }

    pub fn run_pure(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let mut out = psi.to_vec();
        for k in 0..self.pulses.len() {
            out = self.apply_pure(k, &out)?;
        }
        Ok(out)
    }

    /// Product of the dense per-pulse propagators, when every pulse has one.
    pub fn sequence_unitary(&self) -> Option<DMatrix<C64>> {
        let d = self.dim();
        let mut u = DMatrix::identity(d, d);
        for p in &self.pulses {
            u = p.dense.as_ref()? * u;
        }
        Some(u)
    }

    fn lindblad_step(&self, l: &Liouvillian, t: f64, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let d = rho.nrows();
        let out = expv(l, C64::new(1.0, 0.0), t, rho.as_slice(), false, &self.evolution().krylov)?;
        let m = DMatrix::from_column_slice(d, d, &out);
        let adj = m.adjoint();
        Ok((m + adj) * C64::new(0.5, 0.0))
    }

    /// Propagates a density matrix through pulse `k` under the master equation.
    pub fn apply_density(&self, k: usize, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let p = &self.pulses[k];
        let tr0 = trace(rho);
        let mut out = match self.settings.stepping {
            Stepping::Exact => {
                if let (Some(u), true) = (&p.dense, self.collapse.is_empty()) {
                    u * rho * u.adjoint()
                } else {
                    let l = match &p.liouvillian {
                        Some(l) => l.clone(),
                        None => Liouvillian::new(&p.generator.h, &[])?,
                    };
                    let mut m = self.lindblad_step(&l, p.duration(), rho)?;
                    if let Some(phase) = p.generator.post_phase() {
                        apply_diag_density(&mut m, &phase);
                    }
                    m
                }
            }
            Stepping::PiecewiseMidpoint => {
                let (n, dt) = self.steps(p);
                let mut m = rho.clone();
                for s in 0..n {
                    let h = self.midpoint_hamiltonian(p, (s as f64 + 0.5) * dt)?;
                    let l = Liouvillian::new(&h.to_sparse(), &self.collapse)?;
                    m = self.lindblad_step(&l, dt, &m)?;
                }
                if let Some(phase) = p.generator.residual_phase() {
                    apply_diag_density(&mut m, &phase);
                }
                m
            }
        };
        let tr = trace(&out);
        if (tr - tr0).abs() > TRACE_TOL {
            return Err(Error::Numerical(format!(
                "trace drifted by {:.3e} during pulse {k}",
                tr - tr0
            )));
        }
        // Hermitian part only; the anti-Hermitian remainder is round-off.
        let adj = out.adjoint();
        out = (&out + adj) * C64::new(0.5, 0.0);
        Ok(out)
    }

    pub fn run_density(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let mut out = rho.clone();
        for k in 0..self.pulses.len() {
            out = self.apply_density(k, &out)?;
        }
        Ok(out)
    }

    /// Runs a state of either kind: pure states stay pure unless dissipation is present.
    pub fn run_state(&self, state: &QuantumState) -> Result<QuantumState> {
        let layout = self.system.layout.clone();
        if state.layout() != &layout {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: state.dim(),
            });
        }
        match (state.data(), self.settings.method) {
            (StateData::Pure(psi), Method::Unitary) => QuantumState::pure_unchecked(layout, self.run_pure(psi)?),
            (StateData::Pure(psi), _) if self.collapse.is_empty() => {
                QuantumState::pure_unchecked(layout, self.run_pure(psi)?)
            }
            (StateData::Density(rho), _) => QuantumState::density_unchecked(layout, self.run_density(rho)?),
            (StateData::Pure(_), _) => {
                let rho = state.to_density()?;
                let m = self.run_density(rho.density_matrix().expect("promoted"))?;
                QuantumState::density_unchecked(layout, m)
            }
        }
    }
}

/// Propagates `state` through one pulse. Without a noise model the pulse is
/// ideal (no crosstalk or dissipation); with one, crosstalk is applied and the
/// density matrix follows the master equation unless the method is unitary.
pub fn apply_pulse(
    state: &QuantumState,
    pulse: &PulseSpec,
    system: &SystemModel,
    settings: &PropagationSettings,
    noise: Option<&NoiseModel>,
) -> Result<QuantumState> {
    let seq = match noise {
        None => {
            let s = PropagationSettings {
                method: Method::Unitary,
                ..settings.clone()
            };
            PreparedSequence::noiseless(std::slice::from_ref(pulse), system, &s)?
        }
        Some(n) => {
            let seq = PreparedSequence::new(std::slice::from_ref(pulse), system, n, settings)?;
            if seq.settings.method == Method::Trajectories {
                return Err(Error::InvalidArgument(
                    "single-pulse application supports unitary or master-equation propagation".into(),
                ));
            }
            seq
        }
    };
    seq.run_state(state)
}
