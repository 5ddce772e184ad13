//! Real- and imaginary-time integration of the joint orbital + coefficient system.

use num_complex::Complex64;

use crate::eom::{build_local_potentials, mean_field_forces, OrbitalSet};
use crate::error::{check_len, Result, SolverError};
use crate::fock::ConfigurationBasis;
use crate::grid::{GridFn, OneBodyOperatorSpec, SpatialGrid};
use crate::hamiltonian::{assemble_hamiltonian, tables_from_parts, InteractionSpec, SparseHamiltonian};
use crate::rdm::{compute_rdms, density, natural_occupations, RdmBundle};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Everything that defines the physical problem.
#[derive(Debug, Clone)]
pub struct System {
    pub grid: SpatialGrid,
    pub atom: OneBodyOperatorSpec,
    pub molecule: OneBodyOperatorSpec,
    pub interaction: InteractionSpec,
    pub basis: ConfigurationBasis,
    /// Density-matrix regularization strength.
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    RealTime,
    ImaginaryTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationState {
    pub time: f64,
    pub orbitals: OrbitalSet,
    pub coefficients: Vec<Complex64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_final: f64,
    /// Normalize C and orthonormalize orbitals after each imaginary-time step.
    pub renormalize: bool,
    /// Keep orbitals fixed and evolve only the coefficients.
    pub freeze_orbitals: bool,
    pub max_iter: usize,
    pub tol_energy: f64,
    pub tol_orbital: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            dt: 1e-3,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            t_final: 1.0,
            renormalize: true,
            freeze_orbitals: false,
            max_iter: 200_000,
            tol_energy: 1e-10,
            tol_orbital: 1e-8,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SolverError::Precondition(format!("dt must be positive, got {}", self.dt)));
        }
        if self.scheme == Scheme::Rk45 && !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(SolverError::Precondition(
                "adaptive tolerances must be positive".into(),
            ));
        }
        if !(self.tol_energy > 0.0 && self.tol_orbital > 0.0) {
            return Err(SolverError::Precondition(
                "convergence tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Snapshot of observables at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRecord {
    pub time: f64,
    pub energy: f64,
    pub n_atoms: f64,
    pub n_molecules: f64,
    pub norm_c: f64,
    pub occ_a: Vec<f64>,
    pub occ_m: Vec<f64>,
    pub density_a: Vec<f64>,
    pub density_m: Vec<f64>,
    /// Sum of the magnitudes of all conversion density-matrix entries.
    pub conversion_coherence: f64,
    pub orthonormality_drift: f64,
}

/// Residuals of the stationary equations at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryResiduals {
    /// Largest norm of a projected mean-field bracket over all orbitals.
    pub orbital: f64,
    /// `|| H C - eps C ||`.
    pub coefficient: f64,
    /// `eps = C+ H C`.
    pub energy: f64,
}

/// Hamiltonian and density matrices evaluated at one state.
pub struct Evaluation {
    pub hamiltonian: SparseHamiltonian,
    pub rdms: RdmBundle,
    /// Projected mean-field brackets (zero when orbitals are frozen).
    pub forces: Option<OrbitalSet>,
}

impl System {
    pub fn new(
        grid: SpatialGrid,
        atom: OneBodyOperatorSpec,
        molecule: OneBodyOperatorSpec,
        interaction: InteractionSpec,
        basis: ConfigurationBasis,
        eps: f64,
    ) -> Result<Self> {
        check_len("atomic potential", grid.n_points(), atom.potential.len())?;
        check_len("molecular potential", grid.n_points(), molecule.potential.len())?;
        interaction.check_grid(&grid)?;
        if !(eps > 0.0) {
            return Err(SolverError::Precondition(format!(
                "regularization must be positive, got {eps}"
            )));
        }
        Ok(Self {
            grid,
            atom,
            molecule,
            interaction,
            basis,
            eps,
        })
    }

    /// Lowest one-body eigenstates of each species and all particles in the
    /// lowest atomic orbital.
    pub fn default_initial_state(&self, mode: Mode) -> Result<PropagationState> {
        let orbitals = OrbitalSet {
            atomic: self.grid.lowest_eigenstates(&self.atom, self.basis.n_atomic())?,
            molecular: self.grid.lowest_eigenstates(&self.molecule, self.basis.n_molecular())?,
        };
        let mut coefficients = vec![ZERO; self.basis.len()];
        let ground = self.basis.all_atoms_ground();
        coefficients[self.basis.index_of(&ground).expect("ground configuration in basis")] =
            Complex64::new(1.0, 0.0);
        Ok(PropagationState {
            time: 0.0,
            orbitals,
            coefficients,
            mode,
        })
    }

    pub fn check_state(&self, state: &PropagationState) -> Result<()> {
        check_len("atomic orbitals", self.basis.n_atomic(), state.orbitals.n_atomic())?;
        check_len("molecular orbitals", self.basis.n_molecular(), state.orbitals.n_molecular())?;
        check_len("coefficient vector", self.basis.len(), state.coefficients.len())?;
        for f in state.orbitals.all() {
            check_len("orbital samples", self.grid.n_points(), f.len())?;
        }
        Ok(())
    }

    fn one_body(&self, orbitals: &OrbitalSet) -> Result<(Vec<GridFn>, Vec<GridFn>)> {
        let h_phi = orbitals
            .atomic
            .iter()
            .map(|f| self.grid.apply_one_body(&self.atom, f))
            .collect::<Result<Vec<_>>>()?;
        let h_psi = orbitals
            .molecular
            .iter()
            .map(|f| self.grid.apply_one_body(&self.molecule, f))
            .collect::<Result<Vec<_>>>()?;
        Ok((h_phi, h_psi))
    }

    /// Assembles H and the density matrices, and optionally the orbital forces.
    pub fn evaluate(
        &self,
        orbitals: &OrbitalSet,
        coefficients: &[Complex64],
        with_forces: bool,
    ) -> Result<Evaluation> {
        let (h_phi, h_psi) = self.one_body(orbitals)?;
        let ws = build_local_potentials(&self.grid, orbitals, &self.interaction)?;
        let tables = tables_from_parts(&self.grid, orbitals, &h_phi, &h_psi, &ws);
        let hamiltonian = assemble_hamiltonian(&self.basis, &tables)?;
        let rdms = compute_rdms(&self.basis, coefficients)?;
        let forces = if with_forces {
            Some(mean_field_forces(
                &self.grid, orbitals, &h_phi, &h_psi, &rdms, &ws, self.eps,
            )?)
        } else {
            None
        };
        Ok(Evaluation {
            hamiltonian,
            rdms,
            forces,
        })
    }

    /// `<Psi|H|Psi>` for a normalized coefficient vector.
    pub fn energy(&self, state: &PropagationState) -> Result<f64> {
        self.check_state(state)?;
        let (h_phi, h_psi) = self.one_body(&state.orbitals)?;
        let ws = build_local_potentials(&self.grid, &state.orbitals, &self.interaction)?;
        let tables = tables_from_parts(&self.grid, &state.orbitals, &h_phi, &h_psi, &ws);
        assemble_hamiltonian(&self.basis, &tables)?.expectation(&state.coefficients)
    }

    pub fn observables(&self, state: &PropagationState) -> Result<ObservableRecord> {
        self.check_state(state)?;
        let ev = self.evaluate(&state.orbitals, &state.coefficients, false)?;
        let norm_sq: f64 = state.coefficients.iter().map(|c| c.norm_sqr()).sum();
        let rdms = &ev.rdms;
        Ok(ObservableRecord {
            time: state.time,
            energy: ev.hamiltonian.expectation(&state.coefficients)?,
            n_atoms: rdms.atom_number(),
            n_molecules: rdms.molecule_number(),
            norm_c: norm_sq.sqrt(),
            occ_a: natural_occupations(&rdms.rho_a)?,
            occ_m: natural_occupations(&rdms.rho_m)?,
            density_a: density(&self.grid, &rdms.rho_a, &state.orbitals.atomic)?,
            density_m: density(&self.grid, &rdms.rho_m, &state.orbitals.molecular)?,
            conversion_coherence: rdms.rho_conv.iter().map(|v| v.norm()).sum(),
            orthonormality_drift: state.orbitals.orthonormality_drift(&self.grid),
        })
    }

    /// Residuals of the stationary orbital and coefficient equations.
    pub fn stationary_residuals(&self, state: &PropagationState) -> Result<StationaryResiduals> {
        self.check_state(state)?;
        let ev = self.evaluate(&state.orbitals, &state.coefficients, true)?;
        let hc = ev.hamiltonian.matvec(&state.coefficients)?;
        let energy: f64 = state
            .coefficients
            .iter()
            .zip(&hc)
            .map(|(c, h)| (c.conj() * h).re)
            .sum();
        let coefficient = hc
            .iter()
            .zip(&state.coefficients)
            .map(|(h, c)| (h - energy * c).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let orbital = ev
            .forces
            .as_ref()
            .map(|f| f.all().map(|g| self.grid.norm(g)).fold(0.0, f64::max))
            .unwrap_or(0.0);
        Ok(StationaryResiduals {
            orbital,
            coefficient,
            energy,
        })
    }

    fn pack(&self, state: &PropagationState) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.packed_len());
        for f in state.orbitals.all() {
            out.extend_from_slice(f);
        }
        out.extend_from_slice(&state.coefficients);
        out
    }

    fn packed_len(&self) -> usize {
        (self.basis.n_atomic() + self.basis.n_molecular()) * self.grid.n_points() + self.basis.len()
    }

    fn unpack(&self, y: &[Complex64]) -> (OrbitalSet, Vec<Complex64>) {
        let n = self.grid.n_points();
        let (m, mp) = (self.basis.n_atomic(), self.basis.n_molecular());
        let chunk = |i: usize| y[i * n..(i + 1) * n].to_vec();
        let orbitals = OrbitalSet {
            atomic: (0..m).map(chunk).collect(),
            molecular: (m..m + mp).map(chunk).collect(),
        };
        (orbitals, y[(m + mp) * n..].to_vec())
    }

    /// Time derivative of the packed state vector.
    fn derivative(&self, y: &[Complex64], mode: Mode, freeze: bool) -> Result<Vec<Complex64>> {
        let (orbitals, coeffs) = self.unpack(y);
        let ev = self.evaluate(&orbitals, &coeffs, !freeze)?;
        let hc = ev.hamiltonian.matvec(&coeffs)?;
        let factor = match mode {
            Mode::RealTime => -I,
            Mode::ImaginaryTime => Complex64::new(-1.0, 0.0),
        };
        let mut out = Vec::with_capacity(y.len());
        match ev.forces {
            Some(f) => {
                for g in f.all() {
                    out.extend(g.iter().map(|v| factor * v));
                }
            }
            None => out.resize((orbitals.n_atomic() + orbitals.n_molecular()) * self.grid.n_points(), ZERO),
        }
        out.extend(hc.iter().map(|v| factor * v));
        Ok(out)
    }

    fn finish_step(&self, y: &[Complex64], time: f64, mode: Mode, renormalize: bool) -> Result<PropagationState> {
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            let what = if bad < y.len() - self.basis.len() {
                "orbitals"
            } else {
                "coefficients"
            };
            return Err(SolverError::NonFinite {
                what: what.into(),
                time,
            });
        }
        let (mut orbitals, mut coefficients) = self.unpack(y);
        if mode == Mode::ImaginaryTime && renormalize {
            let norm = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            coefficients.iter_mut().for_each(|c| *c /= norm);
            orbitals = orbitals.orthonormalized(&self.grid)?;
        }
        Ok(PropagationState {
            time,
            orbitals,
            coefficients,
            mode,
        })
    }
}

fn combine(y: &[Complex64], terms: &[(f64, &[Complex64])], h: f64) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c == 0.0 {
            continue;
        }
        let s = c * h;
        for (o, v) in out.iter_mut().zip(k) {
            *o += s * v;
        }
    }
    out
}

fn rk4(system: &System, y: &[Complex64], dt: f64, mode: Mode, freeze: bool) -> Result<Vec<Complex64>> {
    let k1 = system.derivative(y, mode, freeze)?;
    let k2 = system.derivative(&combine(y, &[(0.5, &k1)], dt), mode, freeze)?;
    let k3 = system.derivative(&combine(y, &[(0.5, &k2)], dt), mode, freeze)?;
    let k4 = system.derivative(&combine(y, &[(1.0, &k3)], dt), mode, freeze)?;
    Ok(combine(
        y,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        dt,
    ))
}

// Dormand-Prince 5(4) tableau.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince attempt: returns the fifth-order solution and the
/// scaled error norm.
fn dopri_attempt(
    system: &System,
    y: &[Complex64],
    dt: f64,
    config: &IntegratorConfig,
    mode: Mode,
) -> Result<(Vec<Complex64>, f64)> {
    let freeze = config.freeze_orbitals;
    let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(7);
    k.push(system.derivative(y, mode, freeze)?);
    for row in DP_A.iter() {
        let terms: Vec<(f64, &[Complex64])> = row
            .iter()
            .zip(&k)
            .map(|(&a, ki)| (a, ki.as_slice()))
            .collect();
        let stage = combine(y, &terms, dt);
        k.push(system.derivative(&stage, mode, freeze)?);
    }
    // Row 6 of DP_A holds the fifth-order weights (FSAL).
    let terms5: Vec<(f64, &[Complex64])> =
        DP_A[5].iter().zip(&k).map(|(&a, ki)| (a, ki.as_slice())).collect();
    let y5 = combine(y, &terms5, dt);
    let terms4: Vec<(f64, &[Complex64])> =
        DP_B4.iter().zip(&k).map(|(&b, ki)| (b, ki.as_slice())).collect();
    let y4 = combine(y, &terms4, dt);
    let mut err: f64 = 0.0;
    for ((a, b), y0) in y5.iter().zip(&y4).zip(y) {
        let scale = config.abs_tol + config.rel_tol * a.norm().max(y0.norm());
        err = err.max((a - b).norm() / scale);
    }
    Ok((y5, err))
}

/// Advances `state` by one step and returns the new state with the step size
/// suggested for the next step. RK4 takes exactly `dt`; RK45 retries with
/// smaller steps until the local error estimate is accepted.
pub fn step(
    system: &System,
    state: &PropagationState,
    config: &IntegratorConfig,
    dt: f64,
) -> Result<(PropagationState, f64)> {
    system.check_state(state)?;
    let y = system.pack(state);
    let mode = state.mode;
    match config.scheme {
        Scheme::Rk4 => {
            let y1 = rk4(system, &y, dt, mode, config.freeze_orbitals)?;
            let next = system.finish_step(&y1, state.time + dt, mode, config.renormalize)?;
            Ok((next, dt))
        }
        Scheme::Rk45 => {
            let mut h = dt;
            loop {
                if h < 1e-12 {
                    return Err(SolverError::StepUnderflow {
                        time: state.time,
                        dt: h,
                    });
                }
                let (y1, err) = dopri_attempt(system, &y, h, config, mode)?;
                let err = if err.is_finite() { err } else { f64::INFINITY };
                if err <= 1.0 {
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    let next = system.finish_step(&y1, state.time + h, mode, config.renormalize)?;
                    return Ok((next, h * grow));
                }
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            }
        }
    }
}

/// Real-time propagation to `config.t_final`, calling `on_record` at the
/// initial time, every `record_every` steps and at the final time.
pub fn propagate_with<F>(
    system: &System,
    initial: &PropagationState,
    config: &IntegratorConfig,
    record_every: usize,
    mut on_record: F,
) -> Result<PropagationState>
where
    F: FnMut(usize, &PropagationState, &ObservableRecord) -> Result<()>,
{
    config.validate()?;
    if record_every == 0 {
        return Err(SolverError::Precondition("record_every must be at least 1".into()));
    }
    let mut state = initial.clone();
    state.mode = Mode::RealTime;
    let t_end = initial.time + config.t_final;
    on_record(0, &state, &system.observables(&state)?)?;
    let mut dt = config.dt;
    let mut n = 0usize;
    // Fixed steps finish within this slack of t_end rather than taking a sliver step.
    let slack = 1e-9 * config.dt;
    while state.time < t_end - slack {
        let h = dt.min(t_end - state.time);
        let (next, suggested) = step(system, &state, config, h)?;
        state = next;
        if config.scheme == Scheme::Rk45 {
            dt = suggested;
        }
        n += 1;
        let last = state.time >= t_end - slack;
        if last {
            state.time = t_end;
        }
        if n % record_every == 0 || last {
            on_record(n, &state, &system.observables(&state)?)?;
        }
    }
    Ok(state)
}

/// Real-time propagation collecting every record.
pub fn propagate(
    system: &System,
    initial: &PropagationState,
    config: &IntegratorConfig,
    record_every: usize,
) -> Result<Vec<ObservableRecord>> {
    let mut records = Vec::new();
    propagate_with(system, initial, config, record_every, |_, _, r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok(records)
}

/// One line of the relaxation log.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxLogEntry {
    pub iteration: usize,
    pub tau: f64,
    pub energy: f64,
    pub energy_change: f64,
    pub orbital_residual: f64,
    pub coefficient_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    pub state: PropagationState,
    pub energy: f64,
    pub iterations: usize,
    pub log: Vec<RelaxLogEntry>,
    /// False if the energy rose by more than `1e-12` on any step.
    pub monotonic: bool,
}

/// Imaginary-time relaxation until the energy change per step falls below
/// `tol_energy` and both the orbital and coefficient residuals fall below
/// `tol_orbital`.
pub fn relax(
    system: &System,
    initial: &PropagationState,
    config: &IntegratorConfig,
) -> Result<RelaxOutcome> {
    config.validate()?;
    let mut state = initial.clone();
    state.mode = Mode::ImaginaryTime;
    system.check_state(&state)?;
    let norm = state.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(SolverError::Precondition(format!(
            "initial coefficient vector has norm {norm}, expected 1"
        )));
    }
    if !config.freeze_orbitals {
        state.orbitals.check(&system.grid, 1e-8)?;
    }
    let mut res = system.stationary_residuals(&state)?;
    let mut energy = res.energy;
    let mut log = vec![RelaxLogEntry {
        iteration: 0,
        tau: state.time,
        energy,
        energy_change: f64::NAN,
        orbital_residual: res.orbital,
        coefficient_residual: res.coefficient,
    }];
    let mut monotonic = true;
    let mut dt = config.dt;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=config.max_iter {
        let (next, suggested) = step(system, &state, config, dt)?;
        state = next;
        if config.scheme == Scheme::Rk45 {
            dt = suggested;
        }
        res = system.stationary_residuals(&state)?;
        last_change = res.energy - energy;
        if last_change > 1e-12 {
            monotonic = false;
        }
        energy = res.energy;
        log.push(RelaxLogEntry {
            iteration,
            tau: state.time,
            energy,
            energy_change: last_change,
            orbital_residual: res.orbital,
            coefficient_residual: res.coefficient,
        });
        let orbital_ok = config.freeze_orbitals || res.orbital < config.tol_orbital;
        if last_change.abs() < config.tol_energy && orbital_ok && res.coefficient < config.tol_orbital {
            return Ok(RelaxOutcome {
                state,
                energy,
                iterations: iteration,
                log,
                monotonic,
            });
        }
    }
    Err(SolverError::NotConverged {
        iterations: config.max_iter,
        energy_change: last_change.abs(),
        orbital_residual: res.orbital.max(res.coefficient),
    })
}

/// Applies the phase transformation `phi_k -> e^{i beta_k} phi_k`,
/// `psi_k' -> e^{i gamma_k'} psi_k'` with the compensating phase on each
/// coefficient, leaving the many-body state unchanged.
pub fn gauge_transform(
    basis: &ConfigurationBasis,
    state: &PropagationState,
    beta: &[f64],
    gamma: &[f64],
) -> Result<PropagationState> {
    check_len("atomic phases", basis.n_atomic(), beta.len())?;
    check_len("molecular phases", basis.n_molecular(), gamma.len())?;
    check_len("coefficient vector", basis.len(), state.coefficients.len())?;
    let rotate = |set: &[GridFn], phases: &[f64]| -> Vec<GridFn> {
        set.iter()
            .zip(phases)
            .map(|(f, &b)| {
                let p = Complex64::from_polar(1.0, b);
                f.iter().map(|v| v * p).collect()
            })
            .collect()
    };
    let coefficients = basis
        .configs()
        .iter()
        .zip(&state.coefficients)
        .map(|(c, v)| {
            let theta: f64 = c
                .atom_occ
                .iter()
                .zip(beta)
                .map(|(&n, b)| f64::from(n) * b)
                .chain(c.mol_occ.iter().zip(gamma).map(|(&m, g)| f64::from(m) * g))
                .sum();
            v * Complex64::from_polar(1.0, -theta)
        })
        .collect();
    Ok(PropagationState {
        time: state.time,
        orbitals: OrbitalSet {
            atomic: rotate(&state.orbitals.atomic, beta),
            molecular: rotate(&state.orbitals.molecular, gamma),
        },
        coefficients,
        mode: state.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PotentialSpec;
    use crate::hamiltonian::Couplings;

    fn system(n: u32, m: usize, mp: usize, c: Couplings) -> System {
        let grid = SpatialGrid::new(64, 14.0).unwrap();
        let va = PotentialSpec::Harmonic(1.0).sample(&grid, 1.0).unwrap();
        let vm = PotentialSpec::Harmonic(1.0).sample(&grid, 2.0).unwrap();
        let atom = OneBodyOperatorSpec::new(&grid, 1.0, va, 0.0).unwrap();
        let mol = OneBodyOperatorSpec::new(&grid, 2.0, vm, 0.0).unwrap();
        let basis = ConfigurationBasis::enumerate(n, m, mp).unwrap();
        System::new(grid, atom, mol, InteractionSpec::Contact(c), basis, 1e-8).unwrap()
    }

    #[test]
    fn zero_hamiltonian_leaves_state_unchanged() {
        let grid = SpatialGrid::new(16, 4.0).unwrap();
        let zero = OneBodyOperatorSpec::new(&grid, 1.0, vec![0.0; 16], 0.0).unwrap();
        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        let sys = System::new(
            grid.clone(),
            zero.clone(),
            zero,
            InteractionSpec::Contact(Couplings::default()),
            basis,
            1e-8,
        )
        .unwrap();
        let flat = vec![Complex64::new(0.5, 0.0); 16];
        let state = PropagationState {
            time: 0.0,
            orbitals: OrbitalSet {
                atomic: vec![flat.clone()],
                molecular: vec![flat],
            },
            coefficients: vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
            mode: Mode::RealTime,
        };
        let cfg = IntegratorConfig::default();
        let (next, _) = step(&sys, &state, &cfg, 0.1).unwrap();
        assert_eq!(next.coefficients, state.coefficients);
        assert_eq!(next.orbitals, state.orbitals);
    }

    #[test]
    fn noninteracting_relaxation_reaches_trap_energy() {
        let sys = system(3, 1, 1, Couplings::default());
        let mut init = sys.default_initial_state(Mode::ImaginaryTime).unwrap();
        // Perturb the orbital so relaxation has something to do.
        let x = sys.grid.points().to_vec();
        for (v, xi) in init.orbitals.atomic[0].iter_mut().zip(&x) {
            *v *= 1.0 + 0.2 * xi * (-xi * xi).exp();
        }
        init.orbitals = init.orbitals.orthonormalized(&sys.grid).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.01,
            ..Default::default()
        };
        let out = relax(&sys, &init, &cfg).unwrap();
        assert!((out.energy / 3.0 - 0.5).abs() < 1e-6);
        assert!(out.monotonic);
    }

    #[test]
    fn adaptive_and_fixed_agree() {
        let c = Couplings {
            lambda_a: 0.1,
            lambda_con: 0.3,
            ..Default::default()
        };
        let sys = system(2, 1, 1, c);
        let init = sys.default_initial_state(Mode::RealTime).unwrap();
        let fixed = IntegratorConfig {
            dt: 1e-3,
            t_final: 0.5,
            ..Default::default()
        };
        let adaptive = IntegratorConfig {
            scheme: Scheme::Rk45,
            dt: 1e-2,
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            t_final: 0.5,
            ..Default::default()
        };
        let a = propagate(&sys, &init, &fixed, 100).unwrap();
        let b = propagate(&sys, &init, &adaptive, 1000).unwrap();
        let (ra, rb) = (a.last().unwrap(), b.last().unwrap());
        assert!((ra.time - 0.5).abs() < 1e-12 && (rb.time - 0.5).abs() < 1e-12);
        assert!((ra.n_molecules - rb.n_molecules).abs() < 1e-8);
        assert!((ra.energy - rb.energy).abs() < 1e-8);
    }

    #[test]
    fn gauge_transform_preserves_observables() {
        let c = Couplings {
            lambda_a: 0.2,
            lambda_m: 0.1,
            lambda_am: 0.05,
            lambda_con: 0.4,
        };
        let sys = system(4, 2, 2, c);
        let mut state = sys.default_initial_state(Mode::RealTime).unwrap();
        for (i, v) in state.coefficients.iter_mut().enumerate() {
            *v = Complex64::new(1.0 / (1.0 + i as f64), 0.1 * i as f64);
        }
        let norm = state.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        state.coefficients.iter_mut().for_each(|c| *c /= norm);
        let a = sys.observables(&state).unwrap();
        let moved = gauge_transform(&sys.basis, &state, &[0.3, -1.1], &[2.0, 0.7]).unwrap();
        let b = sys.observables(&moved).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-12);
        for (x, y) in a.density_a.iter().zip(&b.density_a) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.occ_m.iter().zip(&b.occ_m) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let sys = system(2, 1, 1, Couplings::default());
        let init = sys.default_initial_state(Mode::RealTime).unwrap();
        let cfg = IntegratorConfig {
            dt: -1.0,
            ..Default::default()
        };
        assert!(propagate(&sys, &init, &cfg, 1).is_err());
        assert!(propagate(&sys, &init, &IntegratorConfig::default(), 0).is_err());
    }
}
