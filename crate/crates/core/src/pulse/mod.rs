//! Raman pulses on carrier and red-sideband transitions, and their propagation.

mod hamiltonian;
mod propagate;
mod sk1;
pub mod trajectory;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::chain::ModeStructure;
use crate::error::{Error, Result};
use crate::tensor::{DimensionCaps, EvolutionSettings, HilbertLayout};

pub use hamiltonian::{build_hamiltonian, carrier_unitary, coupling_terms, CouplingTerm, RotatingGenerator};
pub use propagate::{apply_pulse, PreparedPulse, PreparedSequence};
pub use sk1::{sk1_angles, sk1_pulse};

/// Rabi frequency in rad/s for a population oscillation sin^2(pi f t) at `f` Hz.
pub fn rabi_from_hz(f: f64) -> f64 {
    PI * f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// |0> <-> |1>
    ClockCarrier,
    /// |0> <-> |2>
    AuxCarrier,
    ClockRsb,
    AuxRsb,
}

impl Transition {
    /// Level reached from |0> by the raising operator.
    pub fn upper_level(self) -> usize {
        match self {
            Transition::ClockCarrier | Transition::ClockRsb => 1,
            Transition::AuxCarrier | Transition::AuxRsb => 2,
        }
    }

    pub fn is_sideband(self) -> bool {
        matches!(self, Transition::ClockRsb | Transition::AuxRsb)
    }
}

/// One Raman pulse. `rabi` is the coupling rate on the addressed ion (rad/s),
/// already scaled by that ion's bus-mode coupling for sideband pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// Chain ion index.
    pub ion: usize,
    pub transition: Transition,
    pub angle: f64,
    pub phase: f64,
    /// Detuning from the addressed resonance (rad/s).
    pub detuning: f64,
    pub rabi: f64,
    /// Chain mode index of the bus; required for sideband pulses.
    pub bus_mode: Option<usize>,
}

impl PulseSpec {
    pub fn carrier(ion: usize, transition: Transition, angle: f64, phase: f64, rabi: f64) -> Self {
        Self {
            ion,
            transition,
            angle,
            phase,
            detuning: 0.0,
            rabi,
            bus_mode: None,
        }
    }

    pub fn sideband(ion: usize, transition: Transition, angle: f64, rabi: f64, bus_mode: usize) -> Self {
        Self {
            ion,
            transition,
            angle,
            phase: 0.0,
            detuning: 0.0,
            rabi,
            bus_mode: Some(bus_mode),
        }
    }

    pub fn duration(&self) -> f64 {
        self.angle / (2.0 * self.rabi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.angle > 0.0 && self.angle.is_finite()) {
            return Err(Error::InvalidArgument(format!("pulse angle must be positive, got {}", self.angle)));
        }
        if !(self.rabi > 0.0 && self.rabi.is_finite()) {
            return Err(Error::InvalidArgument(format!("Rabi rate must be positive, got {}", self.rabi)));
        }
        if !self.phase.is_finite() || !self.detuning.is_finite() {
            return Err(Error::InvalidArgument("pulse phase and detuning must be finite".into()));
        }
        if self.transition.is_sideband() && self.bus_mode.is_none() {
            return Err(Error::InvalidArgument("sideband pulse without a bus mode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Unitary when nothing dissipates, the master equation up to
    /// `lindblad_max_dim`, trajectories beyond.
    Auto,
    /// Pure-state Schroedinger propagation; dissipators are ignored.
    Unitary,
    /// Density-matrix master equation.
    Lindblad,
    /// Quantum-jump trajectories averaged over `trajectories` samples.
    Trajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Time-independent generator in the frame co-rotating with every included mode.
    Exact,
    /// Piecewise-constant midpoint Hamiltonian in the interaction picture.
    PiecewiseMidpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSettings {
    /// Chain mode indices simulated; empty means the bus mode alone.
    pub included_modes: Vec<usize>,
    /// Fock cutoff per included mode; empty means `bus_cutoff` / `spectator_cutoff`.
    pub fock_cutoff: Vec<usize>,
    pub bus_cutoff: usize,
    pub spectator_cutoff: usize,
    pub method: Method,
    pub stepping: Stepping,
    /// Step of the piecewise integrator (s); defaults to 1/(20 max detuning).
    pub time_step: Option<f64>,
    pub trajectories: usize,
    pub lindblad_max_dim: usize,
    pub evolution: EvolutionSettings,
    pub caps: DimensionCaps,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self {
            included_modes: Vec::new(),
            fock_cutoff: Vec::new(),
            bus_cutoff: 5,
            spectator_cutoff: 4,
            method: Method::Auto,
            stepping: Stepping::Exact,
            time_step: None,
            trajectories: 400,
            lindblad_max_dim: 256,
            evolution: EvolutionSettings::default(),
            caps: DimensionCaps::default(),
        }
    }
}

impl PropagationSettings {
    pub fn unitary() -> Self {
        Self {
            method: Method::Unitary,
            ..Self::default()
        }
    }

    /// Concrete method for a Hilbert space of dimension `dim`.
    pub fn effective_method(&self, dim: usize, dissipative: bool) -> Method {
        match self.method {
            Method::Auto if !dissipative => Method::Unitary,
            Method::Auto if dim <= self.lindblad_max_dim => Method::Lindblad,
            Method::Auto => Method::Trajectories,
            m => m,
        }
    }

    /// Included chain modes with the bus first when none were listed.
    pub fn resolved_modes(&self, bus_mode: usize) -> Result<Vec<usize>> {
        if self.included_modes.is_empty() {
            return Ok(vec![bus_mode]);
        }
        if !self.included_modes.contains(&bus_mode) {
            return Err(Error::InvalidArgument(format!(
                "bus mode {bus_mode} is not among the included modes {:?}",
                self.included_modes
            )));
        }
        let mut seen = self.included_modes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.included_modes.len() {
            return Err(Error::InvalidArgument("included modes contain duplicates".into()));
        }
        Ok(self.included_modes.clone())
    }

    pub fn resolved_cutoffs(&self, modes: &[usize], bus_mode: usize) -> Result<Vec<usize>> {
        if self.fock_cutoff.is_empty() {
            return Ok(modes
                .iter()
                .map(|&m| if m == bus_mode { self.bus_cutoff } else { self.spectator_cutoff })
                .collect());
        }
        if self.fock_cutoff.len() != modes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} Fock cutoffs given for {} included modes",
                self.fock_cutoff.len(),
                modes.len()
            )));
        }
        Ok(self.fock_cutoff.clone())
    }
}

/// Simulated subsystem: which chain ions and modes occupy the layout sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub layout: HilbertLayout,
    /// Chain ion of each ion site.
    pub ions: Vec<usize>,
    /// Chain mode of each mode site.
    pub modes: Vec<usize>,
    pub bus_mode: usize,
    pub structure: ModeStructure,
}

impl SystemModel {
    pub fn new(structure: &ModeStructure, ions: Vec<usize>, bus_mode: usize, settings: &PropagationSettings) -> Result<Self> {
        structure.check_mode(bus_mode)?;
        let modes = settings.resolved_modes(bus_mode)?;
        for &m in &modes {
            structure.check_mode(m)?;
        }
        if let Some(&i) = ions.iter().find(|&&i| i >= structure.n_ions()) {
            return Err(Error::InvalidArgument(format!("ion {i} is not in the chain")));
        }
        let cutoffs = settings.resolved_cutoffs(&modes, bus_mode)?;
        let layout = HilbertLayout::with_caps(ions.len(), cutoffs, settings.caps)?;
        Ok(Self {
            layout,
            ions,
            modes,
            bus_mode,
            structure: structure.clone(),
        })
    }

    pub fn ion_site(&self, chain_ion: usize) -> Option<usize> {
        self.ions.iter().position(|&i| i == chain_ion)
    }

    pub fn mode_site(&self, chain_mode: usize) -> Option<usize> {
        self.modes.iter().position(|&m| m == chain_mode)
    }
}
