use czsim::chain::{transverse_modes, ChainSpec, ModeStructure};
use czsim::compiler::{GateKind, GateSpec};
use czsim::noise::{spam_channel, NoiseModel};
use czsim::pulse::{Method, PropagationSettings};
use czsim::tomography::*;

fn chain() -> ModeStructure {
    transverse_modes(&ChainSpec::default()).unwrap()
}

fn exact() -> TableOptions {
    TableOptions {
        spam_correct: false,
        ..TableOptions::default()
    }
}

#[test]
fn noiseless_toffoli_table_is_a_permutation() {
    let c = chain();
    let gate = GateSpec::ntoffoli(3);
    let quiet = NoiseModel::noiseless(5, 5);
    let t = run_truth_table(&gate, &c, &quiet, &PropagationSettings::default(), &exact()).unwrap();
    let ideal = ideal_table(GateKind::Ntoffoli, 3, 2, Basis::Computational).unwrap();
    for (row, want) in t.probabilities.iter().zip(&ideal.probabilities) {
        for (p, w) in row.iter().zip(want) {
            assert!((p - w).abs() < 1e-9, "{p} vs {w}");
        }
    }
    assert_eq!(t.probabilities[6][7].round(), 1.0);
    assert_eq!(t.probabilities[7][6].round(), 1.0);
}

#[test]
fn noiseless_conjugate_fidelities_are_one() {
    let c = chain();
    let quiet = NoiseModel::noiseless(5, 5);
    let (tables, report) =
        run_experiment(&GateSpec::ntoffoli(3), &c, &quiet, &PropagationSettings::default(), &exact(), true).unwrap();
    assert_eq!(tables.len(), 4);
    assert_eq!(report.f_k.len(), 3);
    for f in &report.f_k {
        assert!((f - 1.0).abs() < 1e-9, "{f}");
    }
    assert!((report.lower_bound.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report.upper_bound.unwrap(), report.f_k.iter().copied().fold(f64::INFINITY, f64::min));
}

#[test]
fn spam_inversion_recovers_fidelity() {
    let c = chain();
    let gate = GateSpec::ntoffoli(3);
    let mut noise = gate.standard_noise(&c).unwrap();
    noise.spam_error = vec![0.0; 5];
    let settings = PropagationSettings::default();
    let plain = run_truth_table(&gate, &c, &noise, &settings, &exact()).unwrap();
    noise.spam_error = vec![0.01, 0.02, 0.015, 0.03, 0.005];
    let corrected = run_truth_table(&gate, &c, &noise, &settings, &TableOptions::default()).unwrap();
    assert!(corrected.spam_corrected);
    let ideal = ideal_table(GateKind::Ntoffoli, 3, 2, Basis::Computational).unwrap();
    let a = population_fidelity(&plain, &ideal).unwrap();
    let b = population_fidelity(&corrected, &ideal).unwrap();
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");

    // Without the inversion the readout error shows up.
    let spam = noise.spam_for(&[1, 2, 3]);
    let corrupted: Vec<Vec<f64>> = plain.probabilities.iter().map(|r| spam_channel(r, &spam, false).unwrap()).collect();
    let mut raw = plain.clone();
    raw.probabilities = corrupted;
    assert!(population_fidelity(&raw, &ideal).unwrap() < a - 0.01);
}

#[test]
fn shot_noise_scales_as_inverse_root() {
    let c = chain();
    let gate = GateSpec::ntoffoli(3);
    let noise = gate.standard_noise(&c).unwrap();
    let settings = PropagationSettings::default();
    let ideal = ideal_table(GateKind::Ntoffoli, 3, 2, Basis::Computational).unwrap();
    let exact_f = population_fidelity(&run_truth_table(&gate, &c, &noise, &settings, &TableOptions::default()).unwrap(), &ideal).unwrap();
    let mut sigmas = Vec::new();
    for shots in [1_000u64, 10_000, 100_000] {
        let opts = TableOptions {
            shots: Some(shots),
            ..TableOptions::default()
        };
        let (_, report) = run_experiment(&gate, &c, &noise, &settings, &opts, false).unwrap();
        let sigma = report.f_p_uncertainty.unwrap();
        let f = report.f_p.unwrap();
        assert!((f - exact_f).abs() < 4.0 * sigma, "{shots}: {f} vs {exact_f} (sigma {sigma})");
        sigmas.push(sigma);
    }
    for w in sigmas.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn shots_are_reproducible() {
    let c = chain();
    let gate = GateSpec::ntoffoli(2);
    let noise = gate.standard_noise(&c).unwrap();
    let opts = TableOptions {
        shots: Some(300),
        ..TableOptions::default()
    };
    let s = PropagationSettings::default();
    let a = run_truth_table(&gate, &c, &noise, &s, &opts).unwrap();
    let b = run_truth_table(&gate, &c, &noise, &s, &opts).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<TruthTable>(&json).unwrap(), a);
}

fn bus_only_budget(noise: &NoiseModel) -> ErrorBudget {
    let opts = BudgetOptions {
        spectator_modes: Some(Vec::new()),
        all_sources: false,
        ..BudgetOptions::default()
    };
    error_budget(&GateSpec::ntoffoli(3), &chain(), noise, &PropagationSettings::default(), &opts).unwrap()
}

#[test]
fn silent_noise_gives_zero_budget() {
    let b = bus_only_budget(&NoiseModel::noiseless(5, 5));
    assert_eq!(b.rows.len(), 5);
    for r in &b.rows {
        assert!(r.raw.abs() < 1e-9, "{}: {}", r.label, r.raw);
    }
}

#[test]
fn budget_rows_grow_with_their_rate() {
    let base = GateSpec::ntoffoli(3).standard_noise(&chain()).unwrap();
    let row = |b: &ErrorBudget, s: ErrorSource| b.rows.iter().find(|r| r.source == s).unwrap().contribution;
    let mut heating = Vec::new();
    let mut dephasing = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        let mut n = base.clone();
        n.heating_rate[4] *= scale;
        n.motional_coherence_time[4] = n.motional_coherence_time[4].map(|t| t / scale);
        let b = bus_only_budget(&n);
        heating.push(row(&b, ErrorSource::BusHeating));
        dephasing.push(row(&b, ErrorSource::BusDephasing));
    }
    assert!(heating.windows(2).all(|w| w[1] > w[0]), "{heating:?}");
    assert!(dephasing.windows(2).all(|w| w[1] > w[0]), "{dephasing:?}");
}

#[test]
fn budget_rejects_five_qubits() {
    let c = chain();
    let gate = GateSpec::ntoffoli(5);
    let noise = gate.standard_noise(&c).unwrap();
    assert!(error_budget(&gate, &c, &noise, &PropagationSettings::default(), &BudgetOptions::default()).is_err());
}

#[test]
fn spectral_and_krylov_tables_agree() {
    let c = chain();
    let gate = GateSpec::ntoffoli(3);
    let mut noise = NoiseModel::noiseless(5, 5);
    noise.crosstalk_ratio = 0.02;
    let mut settings = PropagationSettings {
        included_modes: vec![4, 3],
        method: Method::Unitary,
        ..PropagationSettings::default()
    };
    settings.evolution.dense_threshold = 0;
    let spectral = run_truth_table(&gate, &c, &noise, &settings, &exact()).unwrap();
    settings.evolution.max_block = 0;
    let krylov = run_truth_table(&gate, &c, &noise, &settings, &exact()).unwrap();
    for (a, b) in spectral.probabilities.iter().flatten().zip(krylov.probabilities.iter().flatten()) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}
