//! Plain-text run configuration: `key = value` lines grouped under
//! `[section]` headers, `#` starts a comment. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Result, SolverError};
use crate::fock::{basis_size, MAX_BASIS_SIZE};
use crate::grid::{OneBodyOperatorSpec, PotentialSpec, SpatialGrid};
use crate::hamiltonian::{Couplings, GeneralKernels, InteractionSpec};
use crate::propagation::{IntegratorConfig, Scheme};
use crate::rdm::DEFAULT_REGULARIZATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Relax,
    Propagate,
    Validate,
}

impl RunMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relax" => Some(Self::Relax),
            "propagate" => Some(Self::Propagate),
            "validate" => Some(Self::Validate),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relax => "relax",
            Self::Propagate => "propagate",
            Self::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteractionKind {
    Contact,
    /// Grid delta `lambda delta_ij / dx` through the general-kernel code path.
    Delta,
    Gaussian(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCoefficients {
    AllAtoms,
    AllMolecules,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_atoms: u32,
    pub m_atomic: usize,
    pub m_molecular: usize,
    pub n_points: usize,
    pub length: f64,
    pub mass_atom: f64,
    pub mass_molecule: f64,
    pub potential_atom: PotentialSpec,
    pub potential_molecule: PotentialSpec,
    pub offset_atom: f64,
    pub offset_molecule: f64,
    pub interaction: InteractionKind,
    pub couplings: Couplings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub coefficients: InitialCoefficients,
    pub restart: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub integrator: IntegratorConfig,
    pub record_every: usize,
    /// Write density snapshots every this many steps; 0 disables them.
    pub density_every: usize,
    pub mode: Option<RunMode>,
    pub output: PathBuf,
    pub eps: f64,
    pub initial: InitialConfig,
}

impl RunConfig {
    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.system.n_points, self.system.length)
    }

    pub fn one_body_specs(&self, grid: &SpatialGrid) -> Result<(OneBodyOperatorSpec, OneBodyOperatorSpec)> {
        let s = &self.system;
        let va = s.potential_atom.sample(grid, s.mass_atom)?;
        let vm = s.potential_molecule.sample(grid, s.mass_molecule)?;
        Ok((
            OneBodyOperatorSpec::new(grid, s.mass_atom, va, s.offset_atom)?,
            OneBodyOperatorSpec::new(grid, s.mass_molecule, vm, s.offset_molecule)?,
        ))
    }

    pub fn interaction(&self, grid: &SpatialGrid) -> Result<InteractionSpec> {
        let c = self.system.couplings;
        Ok(match self.system.interaction {
            InteractionKind::Contact => InteractionSpec::Contact(c),
            InteractionKind::Delta => InteractionSpec::General(GeneralKernels::discrete_delta(grid, c)),
            InteractionKind::Gaussian(sigma) => {
                InteractionSpec::General(GeneralKernels::gaussian(grid, c, sigma)?)
            }
        })
    }

    /// The fully resolved configuration, one `key = value` per line.
    pub fn resolved(&self) -> String {
        let s = &self.system;
        let i = &self.integrator;
        let mut out = String::new();
        let _ = writeln!(out, "[system]");
        let _ = writeln!(out, "n_atoms = {}", s.n_atoms);
        let _ = writeln!(out, "m_atomic = {}", s.m_atomic);
        let _ = writeln!(out, "m_molecular = {}", s.m_molecular);
        let _ = writeln!(out, "n_points = {}", s.n_points);
        let _ = writeln!(out, "length = {}", fmt_num(s.length));
        let _ = writeln!(out, "mass_atom = {}", fmt_num(s.mass_atom));
        let _ = writeln!(out, "mass_molecule = {}", fmt_num(s.mass_molecule));
        let _ = writeln!(out, "potential_atom = {}", s.potential_atom);
        let _ = writeln!(out, "potential_molecule = {}", s.potential_molecule);
        let _ = writeln!(out, "offset_atom = {}", fmt_num(s.offset_atom));
        let _ = writeln!(out, "offset_molecule = {}", fmt_num(s.offset_molecule));
        let kind = match s.interaction {
            InteractionKind::Contact => "contact".to_string(),
            InteractionKind::Delta => "delta".to_string(),
            InteractionKind::Gaussian(w) => format!("gaussian({w})"),
        };
        let _ = writeln!(out, "interaction = {kind}");
        let _ = writeln!(out, "lambda_a = {}", fmt_num(s.couplings.lambda_a));
        let _ = writeln!(out, "lambda_m = {}", fmt_num(s.couplings.lambda_m));
        let _ = writeln!(out, "lambda_am = {}", fmt_num(s.couplings.lambda_am));
        let _ = writeln!(out, "lambda_con = {}", fmt_num(s.couplings.lambda_con));
        let _ = writeln!(out, "[integrator]");
        let scheme = match i.scheme {
            Scheme::Rk4 => "rk4",
            Scheme::Rk45 => "rk45",
        };
        let _ = writeln!(out, "scheme = {scheme}");
        let _ = writeln!(out, "dt = {}", fmt_num(i.dt));
        let _ = writeln!(out, "abs_tol = {}", fmt_num(i.abs_tol));
        let _ = writeln!(out, "rel_tol = {}", fmt_num(i.rel_tol));
        let _ = writeln!(out, "t_final = {}", fmt_num(i.t_final));
        let _ = writeln!(out, "record_every = {}", self.record_every);
        let _ = writeln!(out, "density_every = {}", self.density_every);
        let _ = writeln!(out, "max_iter = {}", i.max_iter);
        let _ = writeln!(out, "tol_energy = {}", fmt_num(i.tol_energy));
        let _ = writeln!(out, "tol_orbital = {}", fmt_num(i.tol_orbital));
        let _ = writeln!(out, "freeze_orbitals = {}", i.freeze_orbitals);
        let _ = writeln!(out, "[run]");
        if let Some(m) = self.mode {
            let _ = writeln!(out, "mode = {}", m.name());
        }
        let _ = writeln!(out, "output = {}", self.output.display());
        let _ = writeln!(out, "eps = {}", fmt_num(self.eps));
        let _ = writeln!(out, "[initial]");
        let coeffs = match self.initial.coefficients {
            InitialCoefficients::AllAtoms => "all_atoms",
            InitialCoefficients::AllMolecules => "all_molecules",
            InitialCoefficients::Uniform => "uniform",
        };
        let _ = writeln!(out, "orbitals = eigen");
        let _ = writeln!(out, "coefficients = {coeffs}");
        if let Some(r) = &self.initial.restart {
            let _ = writeln!(out, "restart = {}", r.display());
        }
        out
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "system",
        &[
            "n_atoms",
            "m_atomic",
            "m_molecular",
            "n_points",
            "length",
            "mass_atom",
            "mass_molecule",
            "potential_atom",
            "potential_molecule",
            "offset_atom",
            "offset_molecule",
            "interaction",
            "lambda_a",
            "lambda_m",
            "lambda_am",
            "lambda_con",
        ],
    ),
    (
        "integrator",
        &[
            "scheme",
            "dt",
            "abs_tol",
            "rel_tol",
            "t_final",
            "record_every",
            "density_every",
            "max_iter",
            "tol_energy",
            "tol_orbital",
            "freeze_orbitals",
        ],
    ),
    ("run", &["mode", "output", "eps"]),
    ("initial", &["orbitals", "coefficients", "restart"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Table {
    entries: BTreeMap<(String, String), Entry>,
}

fn err(line: usize, message: impl Into<String>) -> SolverError {
    SolverError::Config {
        line,
        message: message.into(),
    }
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header '{content}'")))?
                    .trim();
                if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(err(line, format!("unknown section '[{name}]'")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"').to_string();
            let sec = section
                .clone()
                .ok_or_else(|| err(line, format!("key '{key}' appears before any [section]")))?;
            let allowed = KNOWN_KEYS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(err(line, format!("unknown key '{key}' in [{sec}]")));
            }
            if value.is_empty() {
                return Err(err(line, format!("key '{key}' has an empty value")));
            }
            if let Some(prev) = entries.insert((sec, key.to_string()), Entry { value, line }) {
                return Err(err(line, format!("duplicate key '{key}' (first set on line {})", prev.line)));
            }
        }
        Ok(Self { entries })
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, kind: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| err(e.line, format!("key '{key}' expects {kind}, got '{}'", e.value))),
        }
    }

    fn float(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v = self.parsed::<f64>(section, key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            let line = self.get(section, key).map_or(0, |e| e.line);
            return Err(err(line, format!("key '{key}' must be finite")));
        }
        Ok(v)
    }

    fn positive(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v = self.float(section, key, default)?;
        if !(v > 0.0) {
            let line = self.get(section, key).map_or(0, |e| e.line);
            return Err(err(line, format!("key '{key}' must be positive, got {v}")));
        }
        Ok(v)
    }

    fn uint(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .parsed::<usize>(section, key, "a non-negative integer")?
            .unwrap_or(default))
    }

    fn boolean(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        Ok(self.parsed::<bool>(section, key, "true or false")?.unwrap_or(default))
    }

    fn line(&self, section: &str, key: &str) -> usize {
        self.get(section, key).map_or(0, |e| e.line)
    }
}

/// Reads and validates a configuration file. Relative paths inside the file
/// (potential samples, restart state) are resolved against its directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path.parent())
}

pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<RunConfig> {
    let t = Table::parse(text)?;
    let n_atoms = t
        .parsed::<u32>("system", "n_atoms", "a non-negative integer")?
        .ok_or_else(|| err(0, "missing required key 'n_atoms' in [system]"))?;
    if n_atoms == 0 {
        return Err(err(t.line("system", "n_atoms"), "key 'n_atoms' must be at least 1"));
    }
    let m_atomic = t.uint("system", "m_atomic", 1)?;
    let m_molecular = t.uint("system", "m_molecular", 1)?;
    if m_atomic == 0 || m_molecular == 0 {
        return Err(err(
            t.line("system", if m_atomic == 0 { "m_atomic" } else { "m_molecular" }),
            "orbital counts must be at least 1",
        ));
    }
    let size = basis_size(n_atoms, m_atomic, m_molecular);
    if size > MAX_BASIS_SIZE as u128 {
        return Err(SolverError::BasisTooLarge {
            size,
            limit: MAX_BASIS_SIZE,
        });
    }
    let n_points = t.uint("system", "n_points", 128)?;
    let length = t.positive("system", "length", 16.0)?;
    SpatialGrid::new(n_points, length).map_err(|e| err(t.line("system", "n_points"), e.to_string()))?;

    let potential = |key: &str| -> Result<PotentialSpec> {
        match t.get("system", key) {
            None => Ok(PotentialSpec::Harmonic(1.0)),
            Some(e) => PotentialSpec::parse(&e.value, base_dir).map_err(|x| err(e.line, x.to_string())),
        }
    };
    let interaction = match t.get("system", "interaction") {
        None => InteractionKind::Contact,
        Some(e) => parse_interaction(&e.value).ok_or_else(|| {
            err(
                e.line,
                format!("interaction must be contact, delta or gaussian(<width>), got '{}'", e.value),
            )
        })?,
    };

    let system = SystemConfig {
        n_atoms,
        m_atomic,
        m_molecular,
        n_points,
        length,
        mass_atom: t.positive("system", "mass_atom", 1.0)?,
        mass_molecule: t.positive("system", "mass_molecule", 2.0)?,
        potential_atom: potential("potential_atom")?,
        potential_molecule: potential("potential_molecule")?,
        offset_atom: t.float("system", "offset_atom", 0.0)?,
        offset_molecule: t.float("system", "offset_molecule", 0.0)?,
        interaction,
        couplings: Couplings {
            lambda_a: t.float("system", "lambda_a", 0.0)?,
            lambda_m: t.float("system", "lambda_m", 0.0)?,
            lambda_am: t.float("system", "lambda_am", 0.0)?,
            lambda_con: t.float("system", "lambda_con", 0.0)?,
        },
    };

    let defaults = IntegratorConfig::default();
    let scheme = match t.get("integrator", "scheme") {
        None => Scheme::Rk4,
        Some(e) => match e.value.as_str() {
            "rk4" => Scheme::Rk4,
            "rk45" => Scheme::Rk45,
            other => return Err(err(e.line, format!("scheme must be rk4 or rk45, got '{other}'"))),
        },
    };
    let integrator = IntegratorConfig {
        scheme,
        dt: t.positive("integrator", "dt", defaults.dt)?,
        abs_tol: t.positive("integrator", "abs_tol", defaults.abs_tol)?,
        rel_tol: t.positive("integrator", "rel_tol", defaults.rel_tol)?,
        t_final: t.positive("integrator", "t_final", defaults.t_final)?,
        renormalize: true,
        freeze_orbitals: t.boolean("integrator", "freeze_orbitals", false)?,
        max_iter: t.uint("integrator", "max_iter", defaults.max_iter)?,
        tol_energy: t.positive("integrator", "tol_energy", defaults.tol_energy)?,
        tol_orbital: t.positive("integrator", "tol_orbital", defaults.tol_orbital)?,
    };
    if integrator.dt >= integrator.t_final {
        return Err(err(
            t.line("integrator", "dt"),
            format!("dt = {} must be smaller than t_final = {}", integrator.dt, integrator.t_final),
        ));
    }
    let record_every = t.uint("integrator", "record_every", 10)?;
    if record_every == 0 {
        return Err(err(t.line("integrator", "record_every"), "record_every must be at least 1"));
    }

    let mode = match t.get("run", "mode") {
        None => None,
        Some(e) => Some(RunMode::parse(&e.value).ok_or_else(|| {
            err(e.line, format!("mode must be relax, propagate or validate, got '{}'", e.value))
        })?),
    };
    if let Some(e) = t.get("initial", "orbitals") {
        if e.value != "eigen" && e.value != "harmonic" {
            return Err(err(e.line, format!("orbitals must be eigen, got '{}'", e.value)));
        }
    }
    let coefficients = match t.get("initial", "coefficients") {
        None => InitialCoefficients::AllAtoms,
        Some(e) => match e.value.as_str() {
            "all_atoms" => InitialCoefficients::AllAtoms,
            "all_molecules" => InitialCoefficients::AllMolecules,
            "uniform" => InitialCoefficients::Uniform,
            other => {
                return Err(err(
                    e.line,
                    format!("coefficients must be all_atoms, all_molecules or uniform, got '{other}'"),
                ))
            }
        },
    };
    let restart = match t.get("initial", "restart") {
        None => None,
        Some(e) => {
            let p = resolve(base_dir, &e.value);
            if !p.is_file() {
                return Err(err(e.line, format!("restart file '{}' does not exist", p.display())));
            }
            Some(p)
        }
    };

    Ok(RunConfig {
        system,
        integrator,
        record_every,
        density_every: t.uint("integrator", "density_every", 0)?,
        mode,
        output: t
            .get("run", "output")
            .map_or_else(|| PathBuf::from("output"), |e| PathBuf::from(&e.value)),
        eps: t.positive("run", "eps", DEFAULT_REGULARIZATION)?,
        initial: InitialConfig {
            coefficients,
            restart,
        },
    })
}

/// Shortest round-trip decimal, switching to exponent form for very small or
/// large magnitudes.
pub(crate) fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn parse_interaction(s: &str) -> Option<InteractionKind> {
    match s {
        "contact" => Some(InteractionKind::Contact),
        "delta" => Some(InteractionKind::Delta),
        _ => {
            let w: f64 = s.strip_prefix("gaussian(")?.strip_suffix(')')?.trim().parse().ok()?;
            (w > 0.0).then_some(InteractionKind::Gaussian(w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str("[system]\nn_atoms = 2\n", None).unwrap();
        assert_eq!(cfg.system.m_atomic, 1);
        assert_eq!(cfg.system.m_molecular, 1);
        assert_eq!(cfg.system.mass_molecule, 2.0);
        assert_eq!(cfg.system.interaction, InteractionKind::Contact);
        assert_eq!(cfg.integrator.scheme, Scheme::Rk4);
        assert_eq!(cfg.eps, 1e-8);
        assert_eq!(cfg.initial.coefficients, InitialCoefficients::AllAtoms);
        assert!(cfg.resolved().contains("lambda_con = 0"));
    }

    #[test]
    fn misspelled_key_is_named() {
        let e = parse_config_str("[system]\nn_atoms = 2\nlamda_a = 0.1\n", None).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("lamda_a") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn oversized_basis_reports_size() {
        let e = parse_config_str("[system]\nn_atoms = 60\nm_atomic = 6\nm_molecular = 6\n", None)
            .unwrap_err();
        let expected = basis_size(60, 6, 6);
        assert!(expected > MAX_BASIS_SIZE as u128);
        assert!(e.to_string().contains(&expected.to_string()));
    }

    #[test]
    fn type_errors_and_missing_keys() {
        assert!(parse_config_str("[system]\nm_atomic = 2\n", None)
            .unwrap_err()
            .to_string()
            .contains("n_atoms"));
        let e = parse_config_str("[system]\nn_atoms = two\n", None).unwrap_err();
        assert!(e.to_string().contains("n_atoms"));
        assert!(parse_config_str("n_atoms = 2\n", None).is_err());
        assert!(parse_config_str("[sytem]\nn_atoms = 2\n", None).is_err());
        assert!(parse_config_str("[system]\nn_atoms = 2\n[integrator]\ndt = 2\nt_final = 1\n", None).is_err());
        assert!(parse_config_str("[system]\nn_atoms = 2\nn_atoms = 3\n", None).is_err());
    }

    #[test]
    fn full_file() {
        let text = "\
# comment
[system]
n_atoms = 4        # trailing comment
m_atomic = 2
interaction = gaussian(0.5)
lambda_con = 0.2
potential_atom = none
[integrator]
scheme = rk45
t_final = 2
[run]
mode = propagate
[initial]
coefficients = uniform
";
        let cfg = parse_config_str(text, None).unwrap();
        assert_eq!(cfg.system.interaction, InteractionKind::Gaussian(0.5));
        assert_eq!(cfg.system.potential_atom, PotentialSpec::None);
        assert_eq!(cfg.integrator.scheme, Scheme::Rk45);
        assert_eq!(cfg.mode, Some(RunMode::Propagate));
        assert_eq!(cfg.initial.coefficients, InitialCoefficients::Uniform);
        let again = parse_config_str(&cfg.resolved(), None).unwrap();
        assert_eq!(again, cfg);
    }
}
