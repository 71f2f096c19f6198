//! Truth-table experiments, population fidelities and process-fidelity bounds.

mod budget;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ModeStructure;
use crate::compiler::{compile, ideal_unitary, single_qubit_operator, GateKind, GateSpec};
use crate::error::{Error, Result};
use crate::noise::{fock_ensemble, initial_state, pure_product_state, spam_channel, spam_inverse_clipped, NoiseModel, SpinLabel};
use crate::pulse::{Method, PreparedSequence, PropagationSettings, SystemModel};
use crate::tensor::ION_DIM;

pub use budget::{default_spectators, error_budget, BudgetOptions, BudgetRow, ErrorBudget, ErrorSource, ModeConfiguration};

/// Row sums must equal one within this.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Computational,
    /// The given qubit is prepared and read out in the |+>/|-> basis.
    Conjugate(usize),
}

impl Basis {
    fn of(gate: &GateSpec) -> Self {
        gate.basis_rotation.map_or(Basis::Computational, Basis::Conjugate)
    }

    /// Label of basis state `index` on `n` qubits, qubit 0 first.
    pub fn label(self, n: usize, index: usize) -> String {
        (0..n)
            .map(|q| {
                let bit = (index >> (n - 1 - q)) & 1;
                match (self, bit) {
                    (Basis::Conjugate(k), 0) if k == q => '+',
                    (Basis::Conjugate(k), _) if k == q => '-',
                    (_, 0) => '0',
                    _ => '1',
                }
            })
            .collect()
    }

    fn spin_labels(self, n: usize, index: usize) -> Vec<SpinLabel> {
        self.label(n, index)
            .chars()
            .map(|c| SpinLabel::from_char(c).expect("labels are generated from the known set"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthTable {
    pub basis: Basis,
    pub n_qubits: usize,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
    /// `probabilities[input][output]`.
    pub probabilities: Vec<Vec<f64>>,
    /// One standard error per entry, when the table is estimated statistically.
    pub uncertainties: Option<Vec<Vec<f64>>>,
    pub spam_corrected: bool,
    pub shots: Option<u64>,
}

impl TruthTable {
    fn from_rows(basis: Basis, n: usize, probabilities: Vec<Vec<f64>>) -> Self {
        let labels: Vec<String> = (0..1usize << n).map(|i| basis.label(n, i)).collect();
        Self {
            basis,
            n_qubits: n,
            input_labels: labels.clone(),
            output_labels: labels,
            probabilities,
            uncertainties: None,
            spam_corrected: false,
            shots: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = 1usize << self.n_qubits;
        if self.probabilities.len() != d || self.probabilities.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.probabilities.len(),
            });
        }
        if self.input_labels.len() != d || self.output_labels.len() != d {
            return Err(Error::InvalidArgument("label count does not match the table".into()));
        }
        for (label, row) in self.input_labels.iter().zip(&self.probabilities) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Numerical(format!("row {label} is not a distribution (sum {sum})")));
            }
        }
        Ok(())
    }

    /// Header of output labels, then one row per input with 6-decimal probabilities.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input");
        for l in &self.output_labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.input_labels.iter().zip(&self.probabilities) {
            out.push_str(label);
            for p in row {
                let _ = write!(out, ",{p:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Hadamard on the clock levels of one ion, auxiliary level untouched.
fn basis_change() -> DMatrix<C64> {
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let mut h = DMatrix::identity(ION_DIM, ION_DIM);
    h[(0, 0)] = r;
    h[(0, 1)] = r;
    h[(1, 0)] = r;
    h[(1, 1)] = -r;
    h
}

/// Noiseless table of the ideal gate in `basis`.
pub fn ideal_table(kind: GateKind, n: usize, target: usize, basis: Basis) -> Result<TruthTable> {
    let mut u = ideal_unitary(n, kind, target)?;
    if let Basis::Conjugate(k) = basis {
        if k >= n {
            return Err(Error::InvalidArgument(format!("basis qubit {k} out of range")));
        }
        let h = basis_change().view((0, 0), (2, 2)).into_owned();
        let b = single_qubit_operator(n, k, &h);
        u = b.adjoint() * u * b;
    }
    let d = 1usize << n;
    let rows = (0..d).map(|i| (0..d).map(|o| u[(o, i)].norm_sqr()).collect()).collect();
    Ok(TruthTable::from_rows(basis, n, rows))
}

/// Mean over inputs of the probability of the ideal output.
pub fn population_fidelity(table: &TruthTable, ideal: &TruthTable) -> Result<f64> {
    if table.basis != ideal.basis || table.n_qubits != ideal.n_qubits {
        return Err(Error::InvalidArgument("truth tables are in different bases".into()));
    }
    let rows = ideal.probabilities.len();
    if table.probabilities.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: table.probabilities.len(),
        });
    }
    let sum: f64 = table
        .probabilities
        .iter()
        .zip(&ideal.probabilities)
        .map(|(row, ideal_row)| row[argmax(ideal_row)])
        .sum();
    Ok(sum / rows as f64)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

/// Standard error of the population fidelity from per-entry uncertainties.
fn fidelity_uncertainty(table: &TruthTable, ideal: &TruthTable) -> Option<f64> {
    let u = table.uncertainties.as_ref()?;
    let var: f64 = u.iter().zip(&ideal.probabilities).map(|(row, ideal_row)| row[argmax(ideal_row)].powi(2)).sum();
    Some(var.sqrt() / u.len() as f64)
}

/// `(sum F_k - N + 1, min F_k)`; the lower bound is reported even when negative.
pub fn hofmann_bounds(f_k: &[f64]) -> Result<(f64, f64)> {
    if f_k.is_empty() {
        return Err(Error::InvalidArgument("no basis fidelities given".into()));
    }
    if let Some(f) = f_k.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("fidelity {f} outside [0, 1]")));
    }
    let n = f_k.len() as f64;
    let lower = f_k.iter().sum::<f64>() - n + 1.0;
    let upper = f_k.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub f_p: Option<f64>,
    pub f_p_uncertainty: Option<f64>,
    pub f_k: Vec<f64>,
    pub f_k_uncertainty: Vec<Option<f64>>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

impl FidelityReport {
    /// Report from a computational table and/or one conjugate table per qubit.
    pub fn from_tables(computational: Option<(&TruthTable, &TruthTable)>, conjugate: &[(TruthTable, TruthTable)]) -> Result<Self> {
        let (f_p, f_p_uncertainty) = match computational {
            Some((t, ideal)) => (Some(population_fidelity(t, ideal)?), fidelity_uncertainty(t, ideal)),
            None => (None, None),
        };
        let f_k = conjugate.iter().map(|(t, i)| population_fidelity(t, i)).collect::<Result<Vec<_>>>()?;
        let f_k_uncertainty = conjugate.iter().map(|(t, i)| fidelity_uncertainty(t, i)).collect();
        let (lower_bound, upper_bound) = if f_k.is_empty() {
            (None, None)
        } else {
            let (l, u) = hofmann_bounds(&f_k)?;
            (Some(l), Some(u))
        };
        Ok(Self {
            f_p,
            f_p_uncertainty,
            f_k,
            f_k_uncertainty,
            lower_bound,
            upper_bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableOptions {
    /// Shots per input row; `None` returns exact populations.
    pub shots: Option<u64>,
    /// Apply the readout confusion and then invert it.
    pub spam_correct: bool,
    pub seed: u64,
    /// Thermal Fock configurations lighter than this are dropped.
    pub min_fock_weight: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            shots: None,
            spam_correct: true,
            seed: 20_231_017,
            min_fock_weight: 1e-6,
        }
    }
}

/// One input row: exact-mode probabilities and per-entry variance.
type Row = (Vec<f64>, Vec<f64>);

struct Engine {
    seq: PreparedSequence,
    method: Method,
    noise: NoiseModel,
    ensemble: Vec<(f64, Vec<usize>)>,
    n: usize,
    basis: Basis,
    rotation: Option<DMatrix<C64>>,
    /// Output bitstring of each spin basis index.
    readout: Vec<usize>,
    spin_dim: usize,
    mode_dim: usize,
}

impl Engine {
    fn new(gate: &GateSpec, chain: &ModeStructure, noise: &NoiseModel, settings: &PropagationSettings, min_weight: f64) -> Result<Self> {
        let seq = compile(gate, chain)?;
        let system = SystemModel::new(chain, seq.gate_ions.clone(), seq.bus_mode, settings)?;
        let prepared = PreparedSequence::new(&seq.specs(), &system, noise, settings)?;
        let method = prepared.settings.method;
        let layout = &system.layout;
        let n = seq.gate_ions.len();
        let spin_dim = ION_DIM.pow(n as u32);
        let mode_dim = layout.dim() / spin_dim;
        let ensemble = fock_ensemble(noise, layout, &system.modes, min_weight)?;
        let basis = Basis::of(gate);
        let rotation = match basis {
            Basis::Conjugate(k) => {
                let h = basis_change();
                Some((0..n).fold(DMatrix::identity(1, 1), |acc: DMatrix<C64>, q| {
                    if q == k {
                        acc.kronecker(&h)
                    } else {
                        acc.kronecker(&DMatrix::<C64>::identity(ION_DIM, ION_DIM))
                    }
                }))
            }
            Basis::Computational => None,
        };
        // Dark after the readout flip means |1> before it.
        let readout = (0..spin_dim)
            .map(|s| {
                (0..n).fold(0usize, |acc, q| {
                    let level = (s / ION_DIM.pow((n - 1 - q) as u32)) % ION_DIM;
                    (acc << 1) | usize::from(level == 1)
                })
            })
            .collect();
        Ok(Self {
            seq: prepared,
            method,
            noise: noise.clone(),
            ensemble,
            n,
            basis,
            rotation,
            readout,
            spin_dim,
            mode_dim,
        })
    }

    fn reduce_pure(&self, psi: &[C64]) -> DMatrix<C64> {
        let m = DMatrix::from_row_slice(self.spin_dim, self.mode_dim, psi);
        &m * m.adjoint()
    }

    fn reduce_density(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let k = self.mode_dim;
        DMatrix::from_fn(self.spin_dim, self.spin_dim, |a, b| (0..k).map(|m| rho[(a * k + m, b * k + m)]).sum())
    }

    /// Bitstring distribution of a reduced spin state (not renormalised).
    fn measure(&self, spin: &DMatrix<C64>) -> Vec<f64> {
        let diag: Vec<f64> = match &self.rotation {
            Some(u) => {
                let r = u * spin * u.adjoint();
                (0..self.spin_dim).map(|i| r[(i, i)].re).collect()
            }
            None => (0..self.spin_dim).map(|i| spin[(i, i)].re).collect(),
        };
        let mut out = vec![0.0; 1 << self.n];
        for (s, p) in diag.into_iter().enumerate() {
            out[self.readout[s]] += p;
        }
        out
    }

    fn labels(&self, input: usize) -> Vec<SpinLabel> {
        self.basis.spin_labels(self.n, input)
    }

    fn row(&self, input: usize, seed: u64, trajectories: usize) -> Result<Row> {
        let labels = self.labels(input);
        let layout = &self.seq.system.layout;
        let d = 1usize << self.n;
        match self.method {
            Method::Unitary => {
                let mut p = vec![0.0; d];
                for (w, fock) in &self.ensemble {
                    let psi0 = pure_product_state(&labels, fock, layout)?;
                    let out = self.seq.run_pure(psi0.amplitudes().expect("product state is pure"))?;
                    for (a, b) in p.iter_mut().zip(self.measure(&self.reduce_pure(&out))) {
                        *a += w * b;
                    }
                }
                Ok((p, vec![0.0; d]))
            }
            Method::Lindblad | Method::Auto => {
                let rho0 = initial_state(&labels, &self.noise, layout, &self.seq.system.modes)?;
                let rho = self.seq.run_density(rho0.density_matrix().expect("initial state is a density matrix"))?;
                Ok((self.measure(&self.reduce_density(&rho)), vec![0.0; d]))
            }
            Method::Trajectories => self.trajectory_row(&labels, seed, trajectories),
        }
    }

    /// No-jump branches exactly; jump branches sampled with trajectories shared
    /// among thermal configurations in proportion to their jump probability.
    fn trajectory_row(&self, labels: &[SpinLabel], seed: u64, trajectories: usize) -> Result<Row> {
        let layout = &self.seq.system.layout;
        let d = 1usize << self.n;
        let mut p = vec![0.0; d];
        let mut var = vec![0.0; d];
        let mut starts = Vec::with_capacity(self.ensemble.len());
        for (w, fock) in &self.ensemble {
            let psi0 = pure_product_state(labels, fock, layout)?;
            let psi0 = psi0.amplitudes().expect("product state is pure").to_vec();
            let nj = self.seq.no_jump(&psi0)?;
            let p0: f64 = nj.iter().map(|x| x.norm_sqr()).sum::<f64>().min(1.0);
            for (a, b) in p.iter_mut().zip(self.measure(&self.reduce_pure(&nj))) {
                *a += w * b;
            }
            starts.push((*w, psi0, p0));
        }
        let jump_weight: f64 = starts.iter().map(|(w, _, p0)| w * (1.0 - p0)).sum();
        if jump_weight < 1e-14 {
            return Ok((p, var));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, psi0, p0) in &starts {
            let share = w * (1.0 - p0);
            if share < 1e-14 {
                continue;
            }
            let count = ((trajectories as f64) * share / jump_weight).ceil().max(2.0) as usize;
            let mut sum = vec![0.0; d];
            let mut sum2 = vec![0.0; d];
            for _ in 0..count {
                let out = self.seq.run_trajectory(psi0, &mut rng, *p0)?;
                let m = self.measure(&self.reduce_pure(&out.state));
                for k in 0..d {
                    sum[k] += m[k];
                    sum2[k] += m[k] * m[k];
                }
            }
            let c = count as f64;
            for k in 0..d {
                let mean = sum[k] / c;
                let sample_var = ((sum2[k] / c - mean * mean) * c / (c - 1.0)).max(0.0);
                p[k] += share * mean;
                var[k] += share * share * sample_var / c;
            }
        }
        Ok((p, var))
    }
}

fn multinomial(p: &[f64], shots: u64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut left = shots;
    let mut mass = 1.0;
    let mut out = vec![0.0; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        let q = if i + 1 == p.len() { 1.0 } else { (pi / mass).clamp(0.0, 1.0) };
        let k = Binomial::new(left, q)
            .map_err(|e| Error::Numerical(format!("binomial sampling: {e}")))?
            .sample(rng);
        out[i] = k as f64 / shots as f64;
        left -= k;
        mass -= pi;
        if mass <= 0.0 {
            mass = f64::MIN_POSITIVE;
        }
    }
    Ok(out)
}

/// Simulates the compiled gate on every basis input and reads the qubits out
/// after the carrier-flip prelude.
pub fn run_truth_table(
    gate: &GateSpec,
    chain: &ModeStructure,
    noise: &NoiseModel,
    settings: &PropagationSettings,
    opts: &TableOptions,
) -> Result<TruthTable> {
    let engine = Engine::new(gate, chain, noise, settings, opts.min_fock_weight)?;
    let n = engine.n;
    let d = 1usize << n;
    let spam = noise.spam_for(&engine.seq.system.ions);
    let rows: Vec<Row> = (0..d)
        .into_par_iter()
        .map(|input| engine.row(input, opts.seed ^ ((input as u64 + 1) << 32), settings.trajectories))
        .collect::<Result<_>>()?;
    let mut probabilities = Vec::with_capacity(d);
    let mut uncertainties = Vec::with_capacity(d);
    let statistical = opts.shots.is_some() || engine.method == Method::Trajectories;
    for (input, (mut p, var)) in rows.into_iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || p.iter().any(|x| *x < -1e-9) {
            return Err(Error::Numerical(format!(
                "input {} produced an unnormalised row (sum {sum})",
                engine.basis.label(n, input)
            )));
        }
        p.iter_mut().for_each(|x| *x = x.max(0.0) / sum);
        let measured = if opts.spam_correct { spam_channel(&p, &spam, false)? } else { p.clone() };
        let (final_p, sigma) = match opts.shots {
            Some(shots) if shots > 0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0x5eed));
                rng.set_stream(input as u64);
                let freq = multinomial(&measured, shots, &mut rng)?;
                let corrected = if opts.spam_correct { spam_inverse_clipped(&freq, &spam)? } else { freq };
                let sigma: Vec<f64> = corrected
                    .iter()
                    .zip(&var)
                    .map(|(q, v)| (q * (1.0 - q) / shots as f64 + v).sqrt())
                    .collect();
                (corrected, sigma)
            }
            Some(_) => return Err(Error::InvalidArgument("shot count must be positive".into())),
            None => {
                let corrected = if opts.spam_correct { spam_channel(&measured, &spam, true)? } else { measured };
                (corrected, var.iter().map(|v| v.sqrt()).collect())
            }
        };
        probabilities.push(final_p);
        uncertainties.push(sigma);
    }
    let mut table = TruthTable::from_rows(engine.basis, n, probabilities);
    table.uncertainties = statistical.then_some(uncertainties);
    table.spam_corrected = opts.spam_correct;
    table.shots = opts.shots;
    table.validate()?;
    Ok(table)
}

/// Computational-basis table of `gate` plus, when `all_bases`, the controlled-Z
/// tables with each qubit in turn prepared in |+>/|->.
pub fn run_experiment(
    gate: &GateSpec,
    chain: &ModeStructure,
    noise: &NoiseModel,
    settings: &PropagationSettings,
    opts: &TableOptions,
    all_bases: bool,
) -> Result<(Vec<TruthTable>, FidelityReport)> {
    let n = gate.n_qubits;
    let computational = GateSpec {
        basis_rotation: None,
        ..gate.clone()
    };
    let table = run_truth_table(&computational, chain, noise, settings, opts)?;
    let ideal = ideal_table(gate.kind, n, gate.target(), Basis::Computational)?;
    let mut conj = Vec::new();
    if all_bases {
        for k in 0..n {
            let spec = GateSpec {
                kind: GateKind::Ncz,
                basis_rotation: Some(k),
                ..gate.clone()
            };
            let t = run_truth_table(&spec, chain, noise, settings, opts)?;
            conj.push((t, ideal_table(GateKind::Ncz, n, 0, Basis::Conjugate(k))?));
        }
    }
    let report = FidelityReport::from_tables(Some((&table, &ideal)), &conj)?;
    let mut tables = vec![table];
    tables.extend(conj.into_iter().map(|(t, _)| t));
    Ok((tables, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(Basis::Computational.label(3, 6), "110");
        assert_eq!(Basis::Conjugate(0).label(3, 6), "-10");
        assert_eq!(Basis::Conjugate(2).label(3, 6), "11+");
    }

    #[test]
    fn ideal_tables() {
        let t = ideal_table(GateKind::Ntoffoli, 3, 2, Basis::Computational).unwrap();
        assert_eq!(t.probabilities[6][7], 1.0);
        assert_eq!(t.probabilities[7][6], 1.0);
        assert!((population_fidelity(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let c = ideal_table(GateKind::Ncz, 3, 0, Basis::Conjugate(0)).unwrap();
        // |+11> -> |-11>
        assert!((c.probabilities[3][7] - 1.0).abs() < 1e-12);
        assert!((c.probabilities[2][2] - 1.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn uniform_table_scores_one_over_d() {
        let ideal = ideal_table(GateKind::Ntoffoli, 3, 2, Basis::Computational).unwrap();
        let uniform = TruthTable::from_rows(Basis::Computational, 3, vec![vec![0.125; 8]; 8]);
        assert!((population_fidelity(&uniform, &ideal).unwrap() - 0.125).abs() < 1e-15);
        let other = ideal_table(GateKind::Ncz, 3, 0, Basis::Conjugate(1)).unwrap();
        assert!(population_fidelity(&uniform, &other).is_err());
    }

    #[test]
    fn bounds() {
        let (l, u) = hofmann_bounds(&[0.9, 0.8]).unwrap();
        assert!((l - 0.7).abs() < 1e-15 && u == 0.8);
        assert!(hofmann_bounds(&[]).is_err());
        assert!(hofmann_bounds(&[1.2]).is_err());
        let (l, _) = hofmann_bounds(&[0.5, 0.5, 0.5]).unwrap();
        assert!(l < 0.0);
    }

    #[test]
    fn csv_layout() {
        let t = ideal_table(GateKind::Ncz, 2, 0, Basis::Computational).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "input,00,01,10,11");
        assert_eq!(lines[1], "00,1.000000,0.000000,0.000000,0.000000");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn multinomial_counts_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = multinomial(&[0.2, 0.0, 0.5, 0.3], 1000, &mut rng).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
    }
}
