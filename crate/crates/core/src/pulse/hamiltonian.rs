use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{PulseSpec, SystemModel};
use crate::error::{Error, Result};
use crate::tensor::local::{annihilation, transition};
use crate::tensor::{embed_product, CsrMatrix, LinearOperator, ION_DIM};

/// One `amplitude * (sigma_+ a e^{-i(detuning t + phase)} + h.c.)` term; carrier
/// terms have no mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTerm {
    pub ion_site: usize,
    pub mode_site: Option<usize>,
    pub amplitude: f64,
    pub detuning: f64,
}

/// Ion sites hit by the pulse with their relative field amplitude.
fn addressed_sites(pulse: &PulseSpec, system: &SystemModel, crosstalk: f64) -> Result<Vec<(usize, usize, f64)>> {
    let target = system.ion_site(pulse.ion).ok_or_else(|| {
        Error::InvalidArgument(format!("pulse addresses ion {} which is not simulated", pulse.ion))
    })?;
    let mut out = vec![(target, pulse.ion, 1.0)];
    if crosstalk > 0.0 {
        let neighbours = [pulse.ion.checked_sub(1), Some(pulse.ion + 1)];
        for n in neighbours.into_iter().flatten() {
            if let Some(site) = system.ion_site(n) {
                out.push((site, n, crosstalk));
            }
        }
    }
    Ok(out)
}

pub fn coupling_terms(pulse: &PulseSpec, system: &SystemModel, crosstalk: f64) -> Result<Vec<CouplingTerm>> {
    pulse.validate()?;
    let addressed = addressed_sites(pulse, system, crosstalk)?;
    if !pulse.transition.is_sideband() {
        return Ok(addressed
            .into_iter()
            .map(|(site, _, amp)| CouplingTerm {
                ion_site: site,
                mode_site: None,
                amplitude: pulse.rabi * amp,
                detuning: pulse.detuning,
            })
            .collect());
    }
    let bus = pulse.bus_mode.expect("validated sideband pulse has a bus mode");
    if system.mode_site(bus).is_none() {
        return Err(Error::InvalidArgument(format!("bus mode {bus} is absent from the layout")));
    }
    let s = &system.structure;
    let eta_target = s.eta(pulse.ion, bus);
    let scale = s.max_abs_eta(bus, &(0..s.n_ions()).collect::<Vec<_>>());
    if eta_target.abs() < 1e-12 * scale || eta_target == 0.0 {
        return Err(Error::WeakCoupling {
            mode: bus,
            ion: pulse.ion,
            ratio: eta_target.abs() / scale,
        });
    }
    let w_bus = s.frequencies[bus];
    let mut terms = Vec::new();
    for (k, &m) in system.modes.iter().enumerate() {
        let detuning = pulse.detuning + (w_bus - s.frequencies[m]);
        for &(site, ion, amp) in &addressed {
            let amplitude = pulse.rabi * amp * s.eta(ion, m) / eta_target;
            if amplitude != 0.0 {
                terms.push(CouplingTerm {
                    ion_site: site,
                    mode_site: Some(k),
                    amplitude,
                    detuning,
                });
            }
        }
    }
    Ok(terms)
}

fn assemble(pulse: &PulseSpec, system: &SystemModel, terms: &[CouplingTerm], t: f64) -> Result<CsrMatrix> {
    let layout = &system.layout;
    let raise = transition(ION_DIM, pulse.transition.upper_level(), 0);
    let n = layout.dim();
    let mut h = CsrMatrix::zeros(n);
    for term in terms {
        let phase = C64::from_polar(term.amplitude, -(term.detuning * t + pulse.phase));
        let up = &raise * phase;
        let piece = match term.mode_site {
            None => embed_product(layout, &[(layout.ion_site(term.ion_site), &up)])?,
            Some(k) => {
                let a = annihilation(layout.mode_cutoffs()[k]);
                embed_product(layout, &[(layout.ion_site(term.ion_site), &up), (layout.mode_site(k), &a)])?
            }
        };
        h = h.add(&piece).add(&piece.adjoint());
    }
    Ok(h)
}

/// Interaction-picture Hamiltonian of `pulse` at time `t` after its start.
pub fn build_hamiltonian(pulse: &PulseSpec, system: &SystemModel, crosstalk: f64, t: f64) -> Result<LinearOperator> {
    let terms = coupling_terms(pulse, system, crosstalk)?;
    Ok(LinearOperator::from_sparse(assemble(pulse, system, &terms, t)?))
}

/// Time-independent form of a pulse.
///
/// States are stored in the frame where every included mode rotates at the bus
/// frequency, so mode `m` carries the residual `(w_bus - w_m) n_m` at all times.
/// Within a pulse the laser detuning is removed by `kept`, so the propagator is
/// `diag(exp(i kept T)) exp(-i h T)`.
#[derive(Debug, Clone)]
pub struct RotatingGenerator {
    pub h: CsrMatrix,
    pub kept: Vec<f64>,
    pub residual: Vec<f64>,
    pub duration: f64,
    pub terms: Vec<CouplingTerm>,
}

impl RotatingGenerator {
    pub fn new(pulse: &PulseSpec, system: &SystemModel, crosstalk: f64) -> Result<Self> {
        let terms = coupling_terms(pulse, system, crosstalk)?;
        let h0 = assemble(pulse, system, &terms, 0.0)?;
        let layout = &system.layout;
        let s = &system.structure;
        let w_bus = s.frequencies[system.bus_mode];
        let n = layout.dim();
        let mut residual = vec![0.0; n];
        let mut kept = vec![0.0; n];
        let up = pulse.transition.upper_level();
        let mut sites: Vec<usize> = terms.iter().map(|t| t.ion_site).collect();
        sites.sort_unstable();
        sites.dedup();
        for (i, (r, k)) in residual.iter_mut().zip(kept.iter_mut()).enumerate() {
            for (site_k, &m) in system.modes.iter().enumerate() {
                let occ = layout.local(i, layout.mode_site(site_k)) as f64;
                *r += (w_bus - s.frequencies[m]) * occ;
                if pulse.transition.is_sideband() {
                    *k += pulse.detuning * occ;
                }
            }
            if !pulse.transition.is_sideband() {
                let excited = sites.iter().filter(|&&site| layout.local(i, layout.ion_site(site)) == up).count();
                *k -= pulse.detuning * excited as f64;
            }
        }
        let diag: Vec<C64> = residual.iter().zip(&kept).map(|(r, k)| C64::new(r + k, 0.0)).collect();
        let h = h0.add(&CsrMatrix::diagonal(&diag));
        Ok(Self {
            h,
            kept,
            residual,
            duration: pulse.duration(),
            terms,
        })
    }

    /// `exp(i kept T)` diagonal, or `None` when it is the identity.
    pub fn post_phase(&self) -> Option<Vec<C64>> {
        if self.kept.iter().all(|k| *k == 0.0) {
            None
        } else {
            Some(self.kept.iter().map(|k| C64::from_polar(1.0, k * self.duration)).collect())
        }
    }

    /// `exp(-i residual T)`, mapping interaction-picture states into the stored frame.
    pub fn residual_phase(&self) -> Option<Vec<C64>> {
        if self.residual.iter().all(|r| *r == 0.0) {
            None
        } else {
            Some(self.residual.iter().map(|r| C64::from_polar(1.0, -r * self.duration)).collect())
        }
    }

    pub fn max_detuning(&self) -> f64 {
        self.terms.iter().map(|t| t.detuning.abs()).fold(0.0, f64::max)
    }
}

/// Ideal single-ion carrier rotation `exp(-i angle/2 (sigma_+ e^{-i phase} + h.c.))`.
pub fn carrier_unitary(transition_kind: super::Transition, angle: f64, phase: f64) -> DMatrix<C64> {
    let up = transition_kind.upper_level();
    let mut u = DMatrix::identity(ION_DIM, ION_DIM);
    let c = C64::new((angle / 2.0).cos(), 0.0);
    let s = (angle / 2.0).sin();
    u[(0, 0)] = c;
    u[(up, up)] = c;
    u[(up, 0)] = C64::new(0.0, -s) * C64::from_polar(1.0, -phase);
    u[(0, up)] = C64::new(0.0, -s) * C64::from_polar(1.0, phase);
    u
}
