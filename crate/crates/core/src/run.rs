//! Run orchestration and output files for the command-line driver.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{fmt_num, InitialCoefficients, RunConfig, RunMode};
use crate::eom::{build_local_potentials, orbital_rhs, OrbitalSet};
use crate::error::{Result, SolverError};
use crate::fock::{Configuration, ConfigurationBasis};
use crate::grid::GridFn;
use crate::hamiltonian::{assemble_hamiltonian, compute_integrals, InteractionSpec};
use crate::oracle::{dense_hamiltonian, dense_rdms, MAX_DENSE_SIZE};
use crate::propagation::{
    gauge_transform, propagate_with, relax, IntegratorConfig, Mode, ObservableRecord, PropagationState,
    System,
};
use crate::rdm::compute_rdms;
use crate::two_mode::{two_mode_coefficient_matrix, two_mode_orbital_rhs, TwoModeState};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: RunMode,
    pub out_dir: PathBuf,
    /// Requested worker threads; all reductions run in a fixed order on one thread.
    pub threads: usize,
    pub reference_mode: bool,
}

/// One line of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub success: bool,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
struct ComplexValue {
    re: f64,
    im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexValue> for Complex64 {
    fn from(c: ComplexValue) -> Self {
        Complex64::new(c.re, c.im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OrbitalsFile {
    atomic: Vec<Vec<ComplexValue>>,
    molecular: Vec<Vec<ComplexValue>>,
}

/// Final-state dump; also accepted as a restart file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateFile {
    config: String,
    n_atoms: u32,
    m_atomic: usize,
    m_molecular: usize,
    n_points: usize,
    length: f64,
    time: f64,
    energy: f64,
    orbitals: OrbitalsFile,
    coefficients: Vec<ComplexValue>,
}

fn to_values(f: &[Complex64]) -> Vec<ComplexValue> {
    f.iter().copied().map(ComplexValue::from).collect()
}

fn from_values(v: &[ComplexValue]) -> GridFn {
    v.iter().copied().map(Complex64::from).collect()
}

/// Builds the physical system described by a configuration.
pub fn build_system(cfg: &RunConfig) -> Result<System> {
    let grid = cfg.grid()?;
    let (atom, molecule) = cfg.one_body_specs(&grid)?;
    let interaction = cfg.interaction(&grid)?;
    let s = &cfg.system;
    let basis = ConfigurationBasis::enumerate(s.n_atoms, s.m_atomic, s.m_molecular)?;
    System::new(grid, atom, molecule, interaction, basis, cfg.eps)
}

/// Initial state from a restart file or from the configured defaults.
pub fn initial_state(cfg: &RunConfig, system: &System, mode: Mode) -> Result<PropagationState> {
    if let Some(path) = &cfg.initial.restart {
        let file: StateFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let s = &cfg.system;
        if (file.n_atoms, file.m_atomic, file.m_molecular, file.n_points)
            != (s.n_atoms, s.m_atomic, s.m_molecular, s.n_points)
            || (file.length - s.length).abs() > 1e-12 * s.length
        {
            return Err(SolverError::Precondition(format!(
                "restart file {} does not match the configured system",
                path.display()
            )));
        }
        let state = PropagationState {
            time: 0.0,
            orbitals: OrbitalSet {
                atomic: file.orbitals.atomic.iter().map(|f| from_values(f)).collect(),
                molecular: file.orbitals.molecular.iter().map(|f| from_values(f)).collect(),
            },
            coefficients: from_values(&file.coefficients),
            mode,
        };
        system.check_state(&state)?;
        state.orbitals.check(&system.grid, 1e-8)?;
        return Ok(state);
    }
    let mut state = system.default_initial_state(mode)?;
    let basis = &system.basis;
    match cfg.initial.coefficients {
        InitialCoefficients::AllAtoms => {}
        InitialCoefficients::AllMolecules => {
            let p = basis.max_molecules();
            let mut atoms = vec![0; basis.n_atomic()];
            atoms[0] = basis.n_particles() - 2 * p;
            let mut mols = vec![0; basis.n_molecular()];
            mols[0] = p;
            let idx = basis
                .index_of(&Configuration::new(atoms, mols))
                .expect("molecular ground configuration in basis");
            state.coefficients.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            state.coefficients[idx] = Complex64::new(1.0, 0.0);
        }
        InitialCoefficients::Uniform => {
            let v = 1.0 / (basis.len() as f64).sqrt();
            state.coefficients.iter_mut().for_each(|c| *c = Complex64::new(v, 0.0));
        }
    }
    Ok(state)
}

fn comment_header(cfg: &RunConfig, opts: &RunOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# mode = {}", opts.mode.name());
    let _ = writeln!(out, "# threads = {}", opts.threads);
    let _ = writeln!(out, "# reference_mode = {}", opts.reference_mode);
    for line in cfg.resolved().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

fn state_json(cfg: &RunConfig, state: &PropagationState, energy: f64, header: &str) -> Result<String> {
    let s = &cfg.system;
    let file = StateFile {
        config: header.to_string(),
        n_atoms: s.n_atoms,
        m_atomic: s.m_atomic,
        m_molecular: s.m_molecular,
        n_points: s.n_points,
        length: s.length,
        time: state.time,
        energy,
        orbitals: OrbitalsFile {
            atomic: state.orbitals.atomic.iter().map(|f| to_values(f)).collect(),
            molecular: state.orbitals.molecular.iter().map(|f| to_values(f)).collect(),
        },
        coefficients: to_values(&state.coefficients),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

fn rdm_json(system: &System, state: &PropagationState, header: &str) -> Result<String> {
    let rdms = compute_rdms(&system.basis, &state.coefficients)?;
    let mut v = rdms.to_json();
    v["config"] = serde_json::Value::String(header.to_string());
    Ok(serde_json::to_string_pretty(&v)?)
}

fn observables_header(m: usize, mp: usize) -> String {
    let mut cols = vec!["t", "energy", "Na", "Nm", "norm_C"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend((1..=m).map(|i| format!("occ_a_{i}")));
    cols.extend((1..=mp).map(|i| format!("occ_m_{i}")));
    cols.push("conversion_coherence".into());
    cols.push("ortho_drift".into());
    cols.join(",")
}

fn observables_row(r: &ObservableRecord) -> String {
    let mut cols = vec![
        fmt_num(r.time),
        fmt_num(r.energy),
        fmt_num(r.n_atoms),
        fmt_num(r.n_molecules),
        fmt_num(r.norm_c),
    ];
    cols.extend(r.occ_a.iter().map(|&v| fmt_num(v)));
    cols.extend(r.occ_m.iter().map(|&v| fmt_num(v)));
    cols.push(fmt_num(r.conversion_coherence));
    cols.push(fmt_num(r.orthonormality_drift));
    cols.join(",")
}

fn density_csv(header: &str, x: &[f64], values: &[f64]) -> String {
    let mut out = String::from(header);
    out.push_str("x,value\n");
    for (xi, v) in x.iter().zip(values) {
        let _ = writeln!(out, "{},{}", fmt_num(*xi), fmt_num(*v));
    }
    out
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, body)?;
        self.files.push(p);
        Ok(())
    }
}

/// Executes a run; writes `diagnostic.txt` into the output directory when it fails.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let mut out = Outputs::new(&opts.out_dir)?;
    let header = comment_header(cfg, opts);
    let mut last_good: Option<ObservableRecord> = None;
    let result = match opts.mode {
        RunMode::Relax => run_relax(cfg, &header, &mut out),
        RunMode::Propagate => run_propagate(cfg, &header, &mut out, &mut last_good),
        RunMode::Validate => run_validate(cfg, &header, &mut out),
    };
    match result {
        Ok(summary) => {
            let success = !summary.iter().any(|l| l.contains("FAIL"));
            Ok(RunReport {
                success,
                summary,
                files: out.files,
            })
        }
        Err(e) => {
            let mut diag = header.clone();
            let _ = writeln!(diag, "error: {e}");
            if let Some(r) = last_good {
                let _ = writeln!(diag, "last good record:");
                let _ = writeln!(diag, "{}", observables_header(r.occ_a.len(), r.occ_m.len()));
                let _ = writeln!(diag, "{}", observables_row(&r));
            }
            let _ = out.write("diagnostic.txt", &diag);
            Err(e)
        }
    }
}

fn run_relax(cfg: &RunConfig, header: &str, out: &mut Outputs) -> Result<Vec<String>> {
    let system = build_system(cfg)?;
    let init = initial_state(cfg, &system, Mode::ImaginaryTime)?;
    let outcome = relax(&system, &init, &cfg.integrator)?;
    let mut log = String::from(header);
    log.push_str("iteration,tau,energy,energy_change,orbital_residual,coefficient_residual\n");
    for e in &outcome.log {
        let _ = writeln!(
            log,
            "{},{},{},{},{},{}",
            e.iteration,
            fmt_num(e.tau),
            fmt_num(e.energy),
            fmt_num(e.energy_change),
            fmt_num(e.orbital_residual),
            fmt_num(e.coefficient_residual)
        );
    }
    out.write("convergence.csv", &log)?;
    out.write("final_state.json", &state_json(cfg, &outcome.state, outcome.energy, header)?)?;
    out.write("rdms.json", &rdm_json(&system, &outcome.state, header)?)?;
    out.write("basis.txt", &format!("{header}{}", system.basis.dump()))?;
    let tables = compute_integrals(
        &system.grid,
        &outcome.state.orbitals,
        &system.atom,
        &system.molecule,
        &system.interaction,
    )?;
    let h = assemble_hamiltonian(&system.basis, &tables)?;
    out.write("hamiltonian.txt", &format!("{header}{}", h.dump()))?;
    let last = outcome.log.last().expect("log has the initial entry");
    Ok(vec![
        format!("converged after {} iterations", outcome.iterations),
        format!("energy = {}", outcome.energy),
        format!("energy per particle = {}", outcome.energy / f64::from(cfg.system.n_atoms)),
        format!("orbital residual = {:e}", last.orbital_residual),
        format!("coefficient residual = {:e}", last.coefficient_residual),
        format!("monotonic energy descent = {}", outcome.monotonic),
    ])
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn run_propagate(
    cfg: &RunConfig,
    header: &str,
    out: &mut Outputs,
    last_good: &mut Option<ObservableRecord>,
) -> Result<Vec<String>> {
    let system = build_system(cfg)?;
    let init = initial_state(cfg, &system, Mode::RealTime)?;
    let (m, mp) = (cfg.system.m_atomic, cfg.system.m_molecular);
    let mut csv = String::from(header);
    csv.push_str(&observables_header(m, mp));
    csv.push('\n');
    let stride = if cfg.density_every > 0 {
        gcd(cfg.record_every, cfg.density_every)
    } else {
        cfg.record_every
    };
    let x = system.grid.points().to_vec();
    let mut snapshots: Vec<(String, String)> = Vec::new();
    let mut max_nm: f64 = 0.0;
    let mut max_number_error: f64 = 0.0;
    let n_total = f64::from(cfg.system.n_atoms);
    let end = init.time + cfg.integrator.t_final;
    let outcome = propagate_with(&system, &init, &cfg.integrator, stride, |step, _, r| {
        let last = (r.time - end).abs() < 1e-12 * end.abs().max(1.0);
        if step % cfg.record_every == 0 || last {
            csv.push_str(&observables_row(r));
            csv.push('\n');
        }
        if cfg.density_every > 0 && (step % cfg.density_every == 0 || last) {
            snapshots.push((format!("density_a_{step}.csv"), density_csv(header, &x, &r.density_a)));
            snapshots.push((format!("density_m_{step}.csv"), density_csv(header, &x, &r.density_m)));
        }
        max_nm = max_nm.max(r.n_molecules);
        max_number_error = max_number_error.max((r.n_atoms + 2.0 * r.n_molecules - n_total).abs());
        *last_good = Some(r.clone());
        Ok(())
    });
    // Keep whatever was recorded even if the run aborted.
    out.write("observables.csv", &csv)?;
    for (name, body) in &snapshots {
        out.write(name, body)?;
    }
    let final_state = outcome?;
    let energy = system.energy(&final_state)?;
    out.write("final_state.json", &state_json(cfg, &final_state, energy, header)?)?;
    out.write("rdms.json", &rdm_json(&system, &final_state, header)?)?;
    Ok(vec![
        format!("propagated to t = {}", final_state.time),
        format!("final energy = {energy}"),
        format!("max <N_m> = {max_nm:e}"),
        format!("max |<N_a> + 2<N_m> - N| = {max_number_error:e}"),
    ])
}

fn check(name: &str, value: f64, tolerance: f64, note: &str) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        value,
        tolerance,
        passed: value.is_finite() && value <= tolerance,
        note: note.to_string(),
    }
}

fn random_coefficients(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / norm).collect()
}

fn perturbed_orbitals(system: &System, base: &OrbitalSet, rng: &mut ChaCha8Rng) -> Result<OrbitalSet> {
    let x = system.grid.points();
    let width = 0.25 * system.grid.length();
    let mut bump = |f: &GridFn| -> GridFn {
        let (a, b, s) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0));
        f.iter()
            .zip(x)
            .map(|(v, xi)| {
                let g = (-(xi - s).powi(2) / (width * width)).exp();
                v * Complex64::new(1.0 + a * g, b * g * xi)
            })
            .collect()
    };
    let raw = OrbitalSet {
        atomic: base.atomic.iter().map(&mut bump).collect(),
        molecular: base.molecular.iter().map(&mut bump).collect(),
    };
    raw.orthonormalized(&system.grid)
}

/// Invariant checks on the configured system.
pub fn validate(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let system = build_system(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let base = system.default_initial_state(Mode::RealTime)?;
    let orbitals = perturbed_orbitals(&system, &base.orbitals, &mut rng)?;
    let coeffs = random_coefficients(&mut rng, system.basis.len());
    let state = PropagationState {
        time: 0.0,
        orbitals: orbitals.clone(),
        coefficients: coeffs.clone(),
        mode: Mode::RealTime,
    };
    let grid = &system.grid;
    let mut out = Vec::new();

    let tables = compute_integrals(grid, &orbitals, &system.atom, &system.molecule, &system.interaction)?;
    let h = assemble_hamiltonian(&system.basis, &tables)?;
    let rdms = compute_rdms(&system.basis, &coeffs)?;
    let energy = h.expectation(&coeffs)?;
    let scale = h.entries().iter().map(|e| e.2.norm()).fold(1.0, f64::max);

    if system.basis.len() <= MAX_DENSE_SIZE {
        let dense = dense_hamiltonian(&system.basis, &tables)?;
        let sparse = h.to_dense();
        let mut diff: f64 = 0.0;
        for i in 0..dense.dim() {
            for j in 0..dense.dim() {
                diff = diff.max((dense.get(i, j) - sparse[[i, j]]).norm());
            }
        }
        out.push(check("hamiltonian_vs_dense", diff / scale, 1e-12, "relative to max |H_ij|"));
        let d = dense_rdms(&system.basis, &coeffs)?;
        let pairs = [
            (d.rho_a.iter().collect::<Vec<_>>(), rdms.rho_a.iter().collect::<Vec<_>>()),
            (d.rho_m.iter().collect(), rdms.rho_m.iter().collect()),
            (d.rho_a2.iter().collect(), rdms.rho_a2.iter().collect()),
            (d.rho_m2.iter().collect(), rdms.rho_m2.iter().collect()),
            (d.rho_am.iter().collect(), rdms.rho_am.iter().collect()),
            (d.rho_conv.iter().collect(), rdms.rho_conv.iter().collect()),
        ];
        let mut rdiff: f64 = 0.0;
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(&b) {
                rdiff = rdiff.max((**x - **y).norm());
            }
        }
        out.push(check("rdms_vs_dense", rdiff, 1e-12, ""));
    } else {
        out.push(check("hamiltonian_vs_dense", 0.0, 1e-12, "skipped: basis above dense limit"));
    }

    let n = f64::from(cfg.system.n_atoms);
    out.push(check(
        "particle_number_identity",
        (rdms.atom_number() + 2.0 * rdms.molecule_number() - n).abs(),
        1e-10,
        "",
    ));
    out.push(check(
        "energy_from_rdms",
        (rdms.energy(&tables) - energy).abs() / energy.abs().max(1.0),
        1e-12,
        "relative",
    ));

    let ws = build_local_potentials(grid, &orbitals, &system.interaction)?;
    let rhs = orbital_rhs(grid, &orbitals, &rdms, &ws, &system.atom, &system.molecule, system.eps)?;
    let mut tangency: f64 = 0.0;
    for (set, d) in [(&orbitals.atomic, &rhs.atomic), (&orbitals.molecular, &rhs.molecular)] {
        for f in set {
            for g in d {
                tangency = tangency.max(grid.inner(f, g)?.norm());
            }
        }
    }
    let rhs_scale = rhs.all().map(|g| grid.norm(g)).fold(1.0, f64::max);
    out.push(check("orbital_tangency", tangency / rhs_scale, 1e-10, "relative to max ||d phi/dt||"));

    let beta: Vec<f64> = (0..system.basis.n_atomic()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let gamma: Vec<f64> = (0..system.basis.n_molecular()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let moved = gauge_transform(&system.basis, &state, &beta, &gamma)?;
    let a = system.observables(&state)?;
    let b = system.observables(&moved)?;
    let mut gauge = (a.energy - b.energy).abs() / a.energy.abs().max(1.0);
    for (x, y) in a.density_a.iter().zip(&b.density_a).chain(a.density_m.iter().zip(&b.density_m)) {
        gauge = gauge.max((x - y).abs());
    }
    for (x, y) in a.occ_a.iter().zip(&b.occ_a).chain(a.occ_m.iter().zip(&b.occ_m)) {
        gauge = gauge.max((x - y).abs());
    }
    out.push(check("gauge_invariance", gauge, 1e-12, ""));

    if let (1, 1, InteractionSpec::Contact(c)) =
        (system.basis.n_atomic(), system.basis.n_molecular(), &system.interaction)
    {
        let tm = TwoModeState::new(
            cfg.system.n_atoms,
            orbitals.atomic[0].clone(),
            orbitals.molecular[0].clone(),
            coeffs.clone(),
        )?;
        let hm = two_mode_coefficient_matrix(grid, &tm, &system.atom, &system.molecule, *c)?;
        let mut diff: f64 = 0.0;
        for i in 0..system.basis.len() {
            for j in 0..system.basis.len() {
                diff = diff.max((hm[[i, j]] - h.get(i, j)).norm());
            }
        }
        let (da, dm) = two_mode_orbital_rhs(grid, &tm, &system.atom, &system.molecule, *c, system.eps)?;
        for (u, v) in da.iter().zip(&rhs.atomic[0]).chain(dm.iter().zip(&rhs.molecular[0])) {
            diff = diff.max((u - v).norm());
        }
        out.push(check("two_mode_agreement", diff, 1e-10, "coefficient matrix and orbital RHS"));
    }

    let steps = 200usize;
    let short = IntegratorConfig {
        t_final: cfg.integrator.dt * steps as f64,
        ..cfg.integrator.clone()
    };
    let init = system.default_initial_state(Mode::RealTime)?;
    let mut e0 = None;
    let mut de: f64 = 0.0;
    let mut norm_dev: f64 = 0.0;
    let mut number: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut max_nm: f64 = 0.0;
    propagate_with(&system, &init, &short, 10, |_, _, r| {
        let e = *e0.get_or_insert(r.energy);
        de = de.max((r.energy - e).abs() / e.abs().max(1e-300));
        norm_dev = norm_dev.max((r.norm_c - 1.0).abs());
        number = number.max((r.n_atoms + 2.0 * r.n_molecules - n).abs());
        drift = drift.max(r.orthonormality_drift);
        max_nm = max_nm.max(r.n_molecules);
        Ok(())
    })?;
    let note = format!("{steps} real-time steps");
    out.push(check("short_run_energy", de, 1e-7, &note));
    out.push(check("short_run_norm", norm_dev, 1e-8, &note));
    out.push(check("short_run_particle_number", number, 1e-10, &note));
    out.push(check("short_run_orthonormality", drift, 1e-8, &note));

    if cfg.system.couplings.lambda_con == 0.0 {
        out.push(check("decoupled_molecule_number", max_nm, 1e-10, &note));
    }
    Ok(out)
}

fn run_validate(cfg: &RunConfig, header: &str, out: &mut Outputs) -> Result<Vec<String>> {
    let checks = validate(cfg)?;
    let mut table = String::from(header);
    let mut lines = Vec::new();
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(10);
    for c in &checks {
        let line = format!(
            "{:<width$}  {:>12.3e}  <= {:<8.1e}  {}{}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" },
            if c.note.is_empty() {
                String::new()
            } else {
                format!("  ({})", c.note)
            },
        );
        table.push_str(&line);
        table.push('\n');
        lines.push(line);
    }
    out.write("validation.txt", &table)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    lines.push(format!("{} checks, {} failed", checks.len(), failed));
    Ok(lines)
}
