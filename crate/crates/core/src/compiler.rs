//! Cirac-Zoller N-qubit controlled-Z and Toffoli pulse sequences, the
//! readout prelude, and exact ideal unitaries.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::chain::{select_bus_mode, strongest_ions, ModeStructure};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::pulse::{carrier_unitary, rabi_from_hz, sk1_pulse, PreparedSequence, PropagationSettings, PulseSpec, SystemModel, Transition};

/// Gate ions whose bus coupling falls below this fraction of the strongest
/// coupling on that mode cannot be driven.
pub const MIN_COUPLING_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Ncz,
    Ntoffoli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSpec {
    pub kind: GateKind,
    pub n_qubits: usize,
    /// Chain ions in qubit order; empty picks them with the bus mode.
    pub gate_ions: Vec<usize>,
    pub bus_mode: Option<usize>,
    /// Qubit flipped by the Toffoli; defaults to the last.
    pub target_qubit: Option<usize>,
    /// Qubit prepared and read out in the |+>/|-> basis.
    pub basis_rotation: Option<usize>,
    /// Sideband Rabi frequency of the most strongly coupled gate ion (Hz).
    pub sideband_rabi_hz: f64,
    pub aux_sideband_rabi_hz: f64,
    pub carrier_rabi_hz: f64,
    /// Compile target rotations as SK1 composite pulses.
    pub sk1: bool,
}

impl Default for GateSpec {
    fn default() -> Self {
        Self {
            kind: GateKind::Ntoffoli,
            n_qubits: 3,
            gate_ions: Vec::new(),
            bus_mode: None,
            target_qubit: None,
            basis_rotation: None,
            sideband_rabi_hz: 5e3,
            aux_sideband_rabi_hz: 5e3,
            carrier_rabi_hz: 50e3,
            sk1: true,
        }
    }
}

impl GateSpec {
    pub fn ncz(n_qubits: usize) -> Self {
        Self {
            kind: GateKind::Ncz,
            n_qubits,
            ..Self::default()
        }
    }

    pub fn ntoffoli(n_qubits: usize) -> Self {
        Self {
            kind: GateKind::Ntoffoli,
            n_qubits,
            ..Self::default()
        }
    }

    pub fn target(&self) -> usize {
        self.target_qubit.unwrap_or(self.n_qubits.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_qubits < 2 {
            return bad(format!("a gate needs at least 2 qubits, got {}", self.n_qubits));
        }
        if !self.gate_ions.is_empty() && self.gate_ions.len() != self.n_qubits {
            return bad(format!("{} gate ions listed for {} qubits", self.gate_ions.len(), self.n_qubits));
        }
        let mut seen = self.gate_ions.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.gate_ions.len() {
            return bad("gate ions must be distinct".into());
        }
        if self.target() >= self.n_qubits {
            return bad(format!("target qubit {} out of range", self.target()));
        }
        if let Some(k) = self.basis_rotation {
            if k >= self.n_qubits {
                return bad(format!("basis-rotation qubit {k} out of range"));
            }
        }
        for (name, f) in [
            ("sideband_rabi_hz", self.sideband_rabi_hz),
            ("aux_sideband_rabi_hz", self.aux_sideband_rabi_hz),
            ("carrier_rabi_hz", self.carrier_rabi_hz),
        ] {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Gate ions and bus mode for a chain.
    pub fn resolve(&self, modes: &ModeStructure) -> Result<(Vec<usize>, usize)> {
        self.validate()?;
        let n_ions = modes.n_ions();
        if let Some(&i) = self.gate_ions.iter().find(|&&i| i >= n_ions) {
            return Err(Error::InvalidArgument(format!("gate ion {i} is not in the {n_ions}-ion chain")));
        }
        if self.n_qubits > n_ions {
            return Err(Error::InvalidArgument(format!("{} qubits requested from {n_ions} ions", self.n_qubits)));
        }
        let (ions, bus) = match (self.gate_ions.is_empty(), self.bus_mode) {
            (true, None) => {
                let sel = select_bus_mode(modes, self.n_qubits)?;
                (sel.ions, sel.mode)
            }
            (true, Some(m)) => {
                modes.check_mode(m)?;
                (strongest_ions(modes, m, self.n_qubits), m)
            }
            (false, Some(m)) => {
                modes.check_mode(m)?;
                (self.gate_ions.clone(), m)
            }
            (false, None) => {
                let weakest = |m: usize| self.gate_ions.iter().map(|&i| modes.eta(i, m).abs()).fold(f64::INFINITY, f64::min);
                let candidates: Vec<usize> = if modes.n_modes() > 1 { (1..modes.n_modes()).collect() } else { vec![0] };
                let m = candidates
                    .into_iter()
                    .fold(None, |best: Option<usize>, m| match best {
                        Some(b) if weakest(b) >= weakest(m) * (1.0 - 1e-12) => Some(b),
                        _ => Some(m),
                    })
                    .expect("chain has at least one mode");
                (self.gate_ions.clone(), m)
            }
        };
        let scale = modes.max_abs_eta(bus, &(0..n_ions).collect::<Vec<_>>());
        for &i in &ions {
            let ratio = modes.eta(i, bus).abs() / scale;
            if !(ratio >= MIN_COUPLING_RATIO) {
                return Err(Error::WeakCoupling { mode: bus, ion: i, ratio });
            }
        }
        Ok((ions, bus))
    }

    /// Reference-device noise with the resolved bus cooled to the ground state.
    pub fn standard_noise(&self, modes: &ModeStructure) -> Result<NoiseModel> {
        let (_, bus) = self.resolve(modes)?;
        Ok(NoiseModel::standard(modes.n_ions(), modes.n_modes(), bus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseRole {
    /// First qubit mapped onto the bus.
    MapToBus,
    /// Intermediate qubit shelved in the auxiliary level if the bus is empty.
    ShelveIn,
    /// Auxiliary 2 pi pulse on the last qubit.
    ConditionalPhase,
    ShelveOut,
    MapFromBus,
    TargetRotationIn,
    TargetRotationOut,
    ReadoutFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPulse {
    pub pulse: PulseSpec,
    /// Position in the gate's qubit list.
    pub qubit: usize,
    pub role: PulseRole,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledSequence {
    pub kind: GateKind,
    pub gate_ions: Vec<usize>,
    pub bus_mode: usize,
    pub pulses: Vec<CompiledPulse>,
    pub total_duration: f64,
    pub warnings: Vec<String>,
}

impl CompiledSequence {
    fn from_pulses(kind: GateKind, gate_ions: Vec<usize>, bus_mode: usize, list: Vec<(PulseSpec, usize, PulseRole)>, warnings: Vec<String>) -> Self {
        let mut t = 0.0;
        let pulses = list
            .into_iter()
            .map(|(pulse, qubit, role)| {
                let duration = pulse.duration();
                let p = CompiledPulse {
                    pulse,
                    qubit,
                    role,
                    start: t,
                    duration,
                };
                t += duration;
                p
            })
            .collect();
        Self {
            kind,
            gate_ions,
            bus_mode,
            pulses,
            total_duration: t,
            warnings,
        }
    }

    pub fn specs(&self) -> Vec<PulseSpec> {
        self.pulses.iter().map(|p| p.pulse.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("serialising sequence: {e}")))
    }
}

/// Sideband Rabi rate for each gate ion, scaled by its bus coupling so the most
/// strongly coupled ion runs at `rabi_hz`.
fn sideband_rates(modes: &ModeStructure, ions: &[usize], bus: usize, rabi_hz: f64) -> Vec<f64> {
    let max = modes.max_abs_eta(bus, ions);
    ions.iter().map(|&i| rabi_from_hz(rabi_hz) * modes.eta(i, bus).abs() / max).collect()
}

fn ncz_pulses(spec: &GateSpec, modes: &ModeStructure, ions: &[usize], bus: usize, middle: &[usize]) -> Vec<(PulseSpec, usize, PulseRole)> {
    let n = ions.len();
    let clock = sideband_rates(modes, ions, bus, spec.sideband_rabi_hz);
    let aux = sideband_rates(modes, ions, bus, spec.aux_sideband_rabi_hz);
    let map = |role| (PulseSpec::sideband(ions[0], Transition::ClockRsb, PI, clock[0], bus), 0, role);
    let shelve = |q: usize, role| (PulseSpec::sideband(ions[q], Transition::AuxRsb, PI, aux[q], bus), q, role);
    let mut out = vec![map(PulseRole::MapToBus)];
    out.extend(middle.iter().map(|&q| shelve(q, PulseRole::ShelveIn)));
    out.push((
        PulseSpec::sideband(ions[n - 1], Transition::AuxRsb, 2.0 * PI, aux[n - 1], bus),
        n - 1,
        PulseRole::ConditionalPhase,
    ));
    out.extend(middle.iter().rev().map(|&q| shelve(q, PulseRole::ShelveOut)));
    out.push(map(PulseRole::MapFromBus));
    out
}

fn com_warning(bus: usize) -> Vec<String> {
    if bus == 0 {
        vec!["bus is the centre-of-mass mode, which heats fastest".into()]
    } else {
        Vec::new()
    }
}

/// N-qubit controlled-Z. Qubit 0 is mapped onto the bus, qubits 1..N-2 are
/// shelved in ascending order and the last qubit takes the auxiliary 2 pi pulse.
pub fn compile_ncz(spec: &GateSpec, modes: &ModeStructure) -> Result<CompiledSequence> {
    let middle: Vec<usize> = (1..spec.n_qubits.saturating_sub(1)).collect();
    compile_ncz_ordered(spec, modes, &middle)
}

/// As [`compile_ncz`] with an explicit shelving order of the intermediate qubits.
pub fn compile_ncz_ordered(spec: &GateSpec, modes: &ModeStructure, middle: &[usize]) -> Result<CompiledSequence> {
    let (ions, bus) = spec.resolve(modes)?;
    let n = ions.len();
    let mut sorted = middle.to_vec();
    sorted.sort_unstable();
    if sorted != (1..n - 1).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(format!(
            "shelving order {middle:?} is not a permutation of qubits 1..{}",
            n - 1
        )));
    }
    let list = ncz_pulses(spec, modes, &ions, bus, middle);
    Ok(CompiledSequence::from_pulses(GateKind::Ncz, ions, bus, list, com_warning(bus)))
}

fn rotation_pulses(spec: &GateSpec, ion: usize, qubit: usize, phase: f64, role: PulseRole) -> Result<Vec<(PulseSpec, usize, PulseRole)>> {
    let rabi = rabi_from_hz(spec.carrier_rabi_hz);
    let pulses = if spec.sk1 {
        sk1_pulse(ion, Transition::ClockCarrier, phase, PI / 2.0, rabi)?
    } else {
        vec![PulseSpec::carrier(ion, Transition::ClockCarrier, PI / 2.0, phase, rabi)]
    };
    Ok(pulses.into_iter().map(|p| (p, qubit, role)).collect())
}

/// Qubit-subspace block of the product of carrier pulses, first pulse applied first.
fn carrier_block(pulses: &[PulseSpec]) -> DMatrix<C64> {
    let u = pulses
        .iter()
        .fold(DMatrix::identity(3, 3), |acc, p| carrier_unitary(p.transition, p.angle, p.phase) * acc);
    u.view((0, 0), (2, 2)).into_owned()
}

/// `op` acting on `qubit` of an n-qubit register, qubit 0 most significant.
pub fn single_qubit_operator(n: usize, qubit: usize, op: &DMatrix<C64>) -> DMatrix<C64> {
    (0..n).fold(DMatrix::identity(1, 1), |acc, q| {
        if q == qubit {
            acc.kronecker(op)
        } else {
            acc.kronecker(&DMatrix::<C64>::identity(2, 2))
        }
    })
}

/// |Tr(U^dagger V)|^2 / d^2.
pub fn process_fidelity(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    let d = u.nrows() as f64;
    ((u.adjoint() * v).trace().norm() / d).powi(2)
}

/// N-Toffoli: the controlled-Z between two pi/2 carrier rotations on the target.
/// The rotation phase is the first of 0, pi/2, pi, 3pi/2 for which the ideal
/// composite equals the Toffoli up to global phase.
pub fn compile_ntoffoli(spec: &GateSpec, modes: &ModeStructure) -> Result<CompiledSequence> {
    let (ions, bus) = spec.resolve(modes)?;
    let n = ions.len();
    let t = spec.target();
    let ideal = ideal_unitary(n, GateKind::Ntoffoli, t)?;
    let cz = ideal_unitary(n, GateKind::Ncz, t)?;
    let mut chosen = None;
    for phase in [0.0, PI / 2.0, PI, 1.5 * PI] {
        let before = rotation_pulses(spec, ions[t], t, phase, PulseRole::TargetRotationIn)?;
        let after = rotation_pulses(spec, ions[t], t, phase + PI, PulseRole::TargetRotationOut)?;
        let specs = |v: &[(PulseSpec, usize, PulseRole)]| v.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
        let u_in = single_qubit_operator(n, t, &carrier_block(&specs(&before)));
        let u_out = single_qubit_operator(n, t, &carrier_block(&specs(&after)));
        if process_fidelity(&ideal, &(u_out * &cz * u_in)) > 1.0 - 1e-12 {
            chosen = Some((before, after));
            break;
        }
    }
    let (before, after) = chosen.ok_or_else(|| Error::Numerical("no target-rotation phase reproduces the Toffoli".into()))?;
    let middle: Vec<usize> = (1..n - 1).collect();
    let mut list = before;
    list.extend(ncz_pulses(spec, modes, &ions, bus, &middle));
    list.extend(after);
    Ok(CompiledSequence::from_pulses(GateKind::Ntoffoli, ions, bus, list, com_warning(bus)))
}

pub fn compile(spec: &GateSpec, modes: &ModeStructure) -> Result<CompiledSequence> {
    match spec.kind {
        GateKind::Ncz => compile_ncz(spec, modes),
        GateKind::Ntoffoli => compile_ntoffoli(spec, modes),
    }
}

/// Exact 2^n x 2^n gate on the qubit space; `target` only matters for the Toffoli.
pub fn ideal_unitary(n: usize, kind: GateKind, target: usize) -> Result<DMatrix<C64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("gates act on at least 2 qubits, got {n}")));
    }
    if n > 20 {
        return Err(Error::DimensionOverflow);
    }
    let d = 1usize << n;
    let mut u = DMatrix::identity(d, d);
    match kind {
        GateKind::Ncz => u[(d - 1, d - 1)] = C64::new(-1.0, 0.0),
        GateKind::Ntoffoli => {
            if target >= n {
                return Err(Error::InvalidArgument(format!("target {target} out of range")));
            }
            let a = (d - 1) & !(1usize << (n - 1 - target));
            let b = d - 1;
            u[(a, a)] = C64::new(0.0, 0.0);
            u[(b, b)] = C64::new(0.0, 0.0);
            u[(a, b)] = C64::new(1.0, 0.0);
            u[(b, a)] = C64::new(1.0, 0.0);
        }
    }
    Ok(u)
}

/// Carrier pi on every gate ion before fluorescence detection, so that a dark
/// ion reports a qubit that was in |1> and auxiliary population reads bright.
pub fn measurement_prelude(gate_ions: &[usize], carrier_rabi_hz: f64) -> CompiledSequence {
    let rabi = rabi_from_hz(carrier_rabi_hz);
    let list = gate_ions
        .iter()
        .enumerate()
        .map(|(q, &ion)| (PulseSpec::carrier(ion, Transition::ClockCarrier, PI, 0.0, rabi), q, PulseRole::ReadoutFlip))
        .collect();
    CompiledSequence::from_pulses(GateKind::Ncz, gate_ions.to_vec(), 0, list, Vec::new())
}

/// Fluorescence outcome of an ion in `level` after the readout flip: only |0>
/// scatters no light.
pub fn is_dark(level: usize) -> bool {
    level == 0
}

/// Noiseless simulation of a sequence with only its bus mode, starting from the
/// motional ground state.
#[derive(Debug, Clone)]
pub struct SpinAction {
    /// Amplitudes on qubit states with the bus back in |0>, column = input.
    pub unitary: DMatrix<C64>,
    /// Largest mean phonon number over computational inputs.
    pub max_phonons: f64,
    /// Largest auxiliary-level population over computational inputs.
    pub max_aux: f64,
}

pub fn simulate_spin_action(seq: &CompiledSequence, modes: &ModeStructure, bus_cutoff: usize) -> Result<SpinAction> {
    let settings = PropagationSettings {
        bus_cutoff,
        ..PropagationSettings::unitary()
    };
    let system = SystemModel::new(modes, seq.gate_ions.clone(), seq.bus_mode, &settings)?;
    let prepared = PreparedSequence::noiseless(&seq.specs(), &system, &settings)?;
    let layout = &system.layout;
    let n = seq.gate_ions.len();
    let d = 1usize << n;
    let index = |bits: usize, phonons: usize| -> Result<usize> {
        let mut levels: Vec<usize> = (0..n).map(|q| (bits >> (n - 1 - q)) & 1).collect();
        levels.push(phonons);
        layout.flatten(&levels)
    };
    let mut unitary = DMatrix::zeros(d, d);
    let (mut max_phonons, mut max_aux) = (0.0f64, 0.0f64);
    for input in 0..d {
        let mut psi = vec![C64::new(0.0, 0.0); layout.dim()];
        psi[index(input, 0)?] = C64::new(1.0, 0.0);
        let out = match prepared.sequence_unitary() {
            Some(u) => (u * DVector::from_vec(psi)).as_slice().to_vec(),
            None => prepared.run_pure(&psi)?,
        };
        for output in 0..d {
            unitary[(output, input)] = out[index(output, 0)?];
        }
        let mode_site = layout.mode_site(0);
        let mut nbar = 0.0;
        let mut aux = 0.0;
        for (i, a) in out.iter().enumerate() {
            let p = a.norm_sqr();
            nbar += p * layout.local(i, mode_site) as f64;
            if (0..n).any(|q| layout.local(i, layout.ion_site(q)) == 2) {
                aux += p;
            }
        }
        max_phonons = max_phonons.max(nbar);
        max_aux = max_aux.max(aux);
    }
    Ok(SpinAction {
        unitary,
        max_phonons,
        max_aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{transverse_modes, ChainSpec};

    fn chain() -> ModeStructure {
        transverse_modes(&ChainSpec::default()).unwrap()
    }

    #[test]
    fn pulse_counts_and_palindrome() {
        let m = chain();
        for n in 2..=5 {
            let seq = compile_ncz(&GateSpec::ncz(n), &m).unwrap();
            assert_eq!(seq.pulses.len(), 2 * (n - 2) + 3);
            let shelve_in: Vec<usize> = seq.pulses.iter().filter(|p| p.role == PulseRole::ShelveIn).map(|p| p.qubit).collect();
            let mut shelve_out: Vec<usize> = seq.pulses.iter().filter(|p| p.role == PulseRole::ShelveOut).map(|p| p.qubit).collect();
            shelve_out.reverse();
            assert_eq!(shelve_in, shelve_out);
            assert_eq!(shelve_in, (1..n - 1).collect::<Vec<_>>());
            let last = seq.pulses.last().unwrap();
            assert!((seq.total_duration - last.start - last.duration).abs() < 1e-15);
        }
    }

    #[test]
    fn ideal_unitaries() {
        let u = ideal_unitary(2, GateKind::Ncz, 0).unwrap();
        assert_eq!(u.diagonal().iter().map(|x| x.re).collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, -1.0]);
        let t = ideal_unitary(3, GateKind::Ntoffoli, 2).unwrap();
        assert_eq!(t[(7, 6)], C64::new(1.0, 0.0));
        assert_eq!(t[(6, 7)], C64::new(1.0, 0.0));
        assert_eq!(t[(5, 5)], C64::new(1.0, 0.0));
        assert!(ideal_unitary(1, GateKind::Ncz, 0).is_err());
    }

    #[test]
    fn weak_coupling_rejected() {
        let m = chain();
        // The centre ion does not move in the fourth mode.
        let spec = GateSpec {
            gate_ions: vec![1, 2, 3],
            bus_mode: Some(3),
            ..GateSpec::ncz(3)
        };
        assert!(matches!(compile_ncz(&spec, &m), Err(Error::WeakCoupling { ion: 2, .. })));
    }

    #[test]
    fn com_bus_warns() {
        let spec = GateSpec {
            bus_mode: Some(0),
            ..GateSpec::ncz(2)
        };
        assert_eq!(compile_ncz(&spec, &chain()).unwrap().warnings.len(), 1);
    }

    #[test]
    fn readout_levels() {
        let flip = carrier_unitary(Transition::ClockCarrier, PI, 0.0);
        let after = |level: usize| (0..3).find(|&l| flip[(l, level)].norm() > 0.5).unwrap();
        assert!(is_dark(after(1)));
        assert!(!is_dark(after(2)));
        assert!(!is_dark(after(0)));
    }

    #[test]
    fn json_round_trip() {
        let seq = compile_ntoffoli(&GateSpec::ntoffoli(3), &chain()).unwrap();
        let back: CompiledSequence = serde_json::from_str(&seq.to_json().unwrap()).unwrap();
        assert_eq!(back, seq);
    }
}
