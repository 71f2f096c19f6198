use std::fs;
use std::path::Path;

use czsim::chain::{transverse_modes, ModeStructure};
use czsim::compiler::{compile, GateKind};
use czsim::noise::NoiseModel;
use czsim::tomography::{error_budget, hofmann_bounds, ideal_table, run_experiment, Basis, ErrorBudget, FidelityReport, TruthTable};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{Command, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTableReport {
    pub kind: GateKind,
    pub n_qubits: usize,
    pub gate_ions: Vec<usize>,
    pub bus_mode: usize,
    pub noiseless: bool,
    pub shots: Option<u64>,
    pub seed: u64,
    pub fidelity: FidelityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub f_k: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
}

impl Writer<'_> {
    fn dir(&self) -> Result<&Path, Failure> {
        let d = self.cfg.output.directory.as_path();
        fs::create_dir_all(d).map_err(|e| Failure::io(format!("cannot create {}: {e}", d.display())))?;
        Ok(d)
    }

    fn put(&self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.dir()?.join(name);
        fs::write(&path, text).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        if self.cfg.output.format.json() {
            let mut text = serde_json::to_string_pretty(value).expect("reports serialise");
            text.push('\n');
            self.put(&format!("{name}.json"), &text)?;
        }
        Ok(())
    }

    fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
        if self.cfg.output.format.csv() {
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| Failure::io(format!("csv: {e}"));
            w.write_record(header).map_err(fail)?;
            for r in rows {
                w.write_record(r).map_err(fail)?;
            }
            let bytes = w.into_inner().map_err(|e| Failure::io(format!("csv: {e}")))?;
            self.put(&format!("{name}.csv"), &String::from_utf8(bytes).expect("csv output is utf-8"))?;
        }
        Ok(())
    }
}

fn chain(cfg: &RunConfig) -> Result<ModeStructure, Failure> {
    Ok(transverse_modes(&cfg.chain)?)
}

fn noise(cfg: &RunConfig, modes: &ModeStructure, noiseless: bool) -> Result<NoiseModel, Failure> {
    if noiseless {
        return Ok(NoiseModel::noiseless(modes.n_ions(), modes.n_modes()));
    }
    match &cfg.noise {
        Some(n) => Ok(n.clone()),
        None => Ok(cfg.gate.standard_noise(modes)?),
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn pct(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{:.4}", 100.0 * v))
}

pub fn dispatch(command: Command, mut cfg: RunConfig) -> Result<(), Failure> {
    match command {
        Command::Modes => modes(&cfg),
        Command::Compile { n } => {
            if let Some(n) = n {
                cfg.gate.n_qubits = n;
            }
            compile_cmd(&cfg)
        }
        Command::TruthTable {
            n,
            noiseless,
            all_bases,
            shots,
        } => {
            if let Some(n) = n {
                cfg.gate.n_qubits = n;
            }
            if shots.is_some() {
                cfg.tomography.shots = shots;
            }
            truth_table(&cfg, noiseless, all_bases)
        }
        Command::Bounds { fk } => bounds(&cfg, fk),
        Command::ErrorBudget { n } => {
            if let Some(n) = n {
                cfg.gate.n_qubits = n;
            }
            budget(&cfg)
        }
    }
}

fn modes(cfg: &RunConfig) -> Result<(), Failure> {
    let m = chain(cfg)?;
    let w = Writer { cfg };
    w.json("modes", &m)?;
    let n = m.n_ions();
    let mut header = vec!["mode".to_string(), "frequency_hz".to_string()];
    header.extend((0..n).map(|i| format!("b_ion{i}")));
    header.extend((0..n).map(|i| format!("eta_ion{i}")));
    let rows: Vec<Vec<String>> = (0..m.n_modes())
        .map(|k| {
            let mut r = vec![k.to_string(), format!("{:.3}", m.frequencies[k] / (2.0 * std::f64::consts::PI))];
            r.extend((0..n).map(|i| format!("{:.9}", m.participation[i][k])));
            r.extend((0..n).map(|i| format!("{:.9}", m.eta(i, k))));
            r
        })
        .collect();
    w.csv("modes", &header, &rows)?;
    for (k, f) in m.frequencies.iter().enumerate() {
        println!("mode {k}: {:.6} MHz", f / (2.0 * std::f64::consts::PI) / 1e6);
    }
    Ok(())
}

fn compile_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let m = chain(cfg)?;
    let seq = compile(&cfg.gate, &m)?;
    let w = Writer { cfg };
    w.json("sequence", &seq)?;
    let header: Vec<String> = ["index", "role", "qubit", "ion", "transition", "angle", "phase", "start_us", "duration_us"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = seq
        .pulses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                format!("{:?}", p.role),
                p.qubit.to_string(),
                p.pulse.ion.to_string(),
                format!("{:?}", p.pulse.transition),
                f6(p.pulse.angle),
                f6(p.pulse.phase),
                format!("{:.3}", p.start * 1e6),
                format!("{:.3}", p.duration * 1e6),
            ]
        })
        .collect();
    w.csv("sequence", &header, &rows)?;
    println!(
        "{} pulses on ions {:?} via mode {}, {:.1} us",
        seq.pulses.len(),
        seq.gate_ions,
        seq.bus_mode,
        seq.total_duration * 1e6
    );
    for warning in &seq.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn table_name(basis: Basis) -> String {
    match basis {
        Basis::Computational => "truth_table".into(),
        Basis::Conjugate(k) => format!("truth_table_conjugate_q{k}"),
    }
}

/// Long format for bar charts: one row per (input, output) pair.
fn bar_rows(table: &TruthTable, ideal: &TruthTable) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, input) in table.input_labels.iter().enumerate() {
        for (o, output) in table.output_labels.iter().enumerate() {
            let sigma = table.uncertainties.as_ref().map_or(String::new(), |u| f6(u[i][o]));
            rows.push(vec![
                input.clone(),
                output.clone(),
                f6(table.probabilities[i][o]),
                sigma,
                f6(ideal.probabilities[i][o]),
            ]);
        }
    }
    rows
}

fn truth_table(cfg: &RunConfig, noiseless: bool, all_bases: bool) -> Result<(), Failure> {
    let m = chain(cfg)?;
    let noise = noise(cfg, &m, noiseless)?;
    let (ions, bus) = cfg.gate.resolve(&m)?;
    let (tables, fidelity) = run_experiment(&cfg.gate, &m, &noise, &cfg.propagation, &cfg.tomography, all_bases)?;
    let w = Writer { cfg };
    let n = cfg.gate.n_qubits;
    let header: Vec<String> = ["input", "output", "probability", "uncertainty", "ideal"].iter().map(|s| s.to_string()).collect();
    for t in &tables {
        let name = table_name(t.basis);
        let ideal = match t.basis {
            Basis::Computational => ideal_table(cfg.gate.kind, n, cfg.gate.target(), t.basis)?,
            Basis::Conjugate(_) => ideal_table(GateKind::Ncz, n, 0, t.basis)?,
        };
        w.json(&name, t)?;
        if cfg.output.format.csv() {
            w.put(&format!("{name}.csv"), &t.to_csv())?;
        }
        w.csv(&format!("{name}_bars"), &header, &bar_rows(t, &ideal))?;
    }
    let report = TruthTableReport {
        kind: cfg.gate.kind,
        n_qubits: n,
        gate_ions: ions,
        bus_mode: bus,
        noiseless,
        shots: cfg.tomography.shots,
        seed: cfg.tomography.seed,
        fidelity,
    };
    w.json("report", &report)?;
    let f = &report.fidelity;
    if let Some(fp) = f.f_p {
        match f.f_p_uncertainty {
            Some(s) => println!("F_p = {fp:.6} +- {s:.6}"),
            None => println!("F_p = {fp:.6}"),
        }
    }
    for (k, fk) in f.f_k.iter().enumerate() {
        println!("F_{k} = {fk:.6}");
    }
    if let (Some(l), Some(u)) = (f.lower_bound, f.upper_bound) {
        println!("{l:.6} <= F_chi <= {u:.6}");
    }
    Ok(())
}

fn bounds(cfg: &RunConfig, fk: Vec<f64>) -> Result<(), Failure> {
    let (lower_bound, upper_bound) = hofmann_bounds(&fk)?;
    let report = BoundsReport {
        f_k: fk,
        lower_bound,
        upper_bound,
    };
    Writer { cfg }.json("bounds", &report)?;
    println!("{lower_bound:.6} <= F_chi <= {upper_bound:.6}");
    Ok(())
}

fn budget(cfg: &RunConfig) -> Result<(), Failure> {
    let m = chain(cfg)?;
    let noise = noise(cfg, &m, false)?;
    let b: ErrorBudget = error_budget(&cfg.gate, &m, &noise, &cfg.propagation, &cfg.budget)?;
    let w = Writer { cfg };
    w.json("error_budget", &b)?;
    let header: Vec<String> = ["source", "configuration", "contribution_percent", "uncertainty_percent", "reference_percent"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows: Vec<Vec<String>> = b
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                format!("{:?}", r.configuration),
                pct(Some(r.contribution)),
                pct(Some(r.uncertainty)),
                pct(r.reference),
            ]
        })
        .collect();
    rows.push(vec![
        "Total".into(),
        String::new(),
        pct(Some(b.sum_of_rows)),
        String::new(),
        pct(b.reference_total),
    ]);
    w.csv("error_budget", &header, &rows)?;
    for r in &b.rows {
        println!("{:<28} {:>8}%", r.label, pct(Some(r.contribution)));
    }
    println!("{:<28} {:>8}%", "Total", pct(Some(b.sum_of_rows)));
    if let Some(a) = b.all_sources {
        println!("{:<28} {:>8}%", "All sources at once", pct(Some(a)));
    }
    Ok(())
}
