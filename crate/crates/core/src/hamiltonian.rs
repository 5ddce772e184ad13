//! Orbital integrals and the sparse configuration-space Hamiltonian.
//!
//! The second-quantized Hamiltonian in the time-dependent orbital basis is
//!
//! ```text
//! H = sum h^a_kq b+_k b_q + 1/2 sum W^a_ksql b+_k b+_s b_l b_q
//!   + sum h^m_k'q' c+_k' c_q' + 1/2 sum W^m_k's'q'l' c+_k' c+_s' c_l' c_q'
//!   + sum W^am_kk'qq' b+_k b_q c+_k' c_q'
//!   + 1/sqrt2 sum [ W^conv_k'kq c+_k' b_k b_q + h.c. ]
//! ```
//!
//! Particle-conserving terms are generated by applying ladder rules to each
//! ket; the conversion block uses the closed-form square-root factors.

use std::fmt::Write as _;

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;

use crate::eom::{build_local_potentials, EomWorkspace, OrbitalSet};
use crate::error::{check_len, Result, SolverError};
use crate::fock::{lower, raise, Configuration, ConfigurationBasis};
use crate::grid::{GridFn, OneBodyOperatorSpec, SpatialGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Contact-interaction strengths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Couplings {
    pub lambda_a: f64,
    pub lambda_m: f64,
    pub lambda_am: f64,
    pub lambda_con: f64,
}

/// A real symmetric two-point kernel sampled on the grid (row-major, `n x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    n: usize,
    values: Vec<f64>,
}

impl Kernel {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_len("kernel samples", n * n, values.len())?;
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if (a - b).abs() > 1e-12 {
                    return Err(SolverError::Precondition(format!(
                        "interaction kernel not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: &SpatialGrid, f: F) -> Result<Self> {
        let x = grid.points();
        let n = x.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = f(x[i], x[j]);
            }
        }
        Self::new(n, values)
    }

    /// `strength * delta_ij / dx`: the grid representation of a contact interaction.
    pub fn discrete_delta(grid: &SpatialGrid, strength: f64) -> Self {
        let n = grid.n_points();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = strength / grid.spacing();
        }
        Self { n, values }
    }

    /// Normalized Gaussian of width `sigma` scaled by `strength`.
    pub fn gaussian(grid: &SpatialGrid, strength: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(SolverError::Precondition(format!(
                "gaussian kernel width must be positive, got {sigma}"
            )));
        }
        let norm = strength / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        Self::from_fn(grid, |x, y| norm * (-(x - y).powi(2) / (2.0 * sigma * sigma)).exp())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralKernels {
    pub atom: Kernel,
    pub molecule: Kernel,
    pub mixed: Kernel,
    pub conversion: Kernel,
}

impl GeneralKernels {
    pub fn discrete_delta(grid: &SpatialGrid, c: Couplings) -> Self {
        Self {
            atom: Kernel::discrete_delta(grid, c.lambda_a),
            molecule: Kernel::discrete_delta(grid, c.lambda_m),
            mixed: Kernel::discrete_delta(grid, c.lambda_am),
            conversion: Kernel::discrete_delta(grid, c.lambda_con),
        }
    }

    pub fn gaussian(grid: &SpatialGrid, c: Couplings, sigma: f64) -> Result<Self> {
        Ok(Self {
            atom: Kernel::gaussian(grid, c.lambda_a, sigma)?,
            molecule: Kernel::gaussian(grid, c.lambda_m, sigma)?,
            mixed: Kernel::gaussian(grid, c.lambda_am, sigma)?,
            conversion: Kernel::gaussian(grid, c.lambda_con, sigma)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteractionSpec {
    Contact(Couplings),
    General(GeneralKernels),
}

impl InteractionSpec {
    pub fn contact_couplings(&self) -> Option<Couplings> {
        match self {
            InteractionSpec::Contact(c) => Some(*c),
            InteractionSpec::General(_) => None,
        }
    }

    pub(crate) fn check_grid(&self, grid: &SpatialGrid) -> Result<()> {
        if let InteractionSpec::General(k) = self {
            for kernel in [&k.atom, &k.molecule, &k.mixed, &k.conversion] {
                check_len("interaction kernel", grid.n_points(), kernel.n())?;
            }
        }
        Ok(())
    }
}

/// All one-body, two-body and conversion integrals over the current orbitals.
///
/// Index conventions: `w_a[[k, s, q, l]] = <phi_k phi_s | W | phi_q phi_l>`,
/// `w_am[[k, k', q, q']]`, `w_conv[[k', k, q]] = <psi_k' | W | phi_k phi_q>`.
#[derive(Debug, Clone)]
pub struct IntegralTables {
    pub h_a: Array2<Complex64>,
    pub h_m: Array2<Complex64>,
    pub w_a: Array4<Complex64>,
    pub w_m: Array4<Complex64>,
    pub w_am: Array4<Complex64>,
    pub w_conv: Array3<Complex64>,
}

impl IntegralTables {
    pub fn n_atomic(&self) -> usize {
        self.h_a.nrows()
    }

    pub fn n_molecular(&self) -> usize {
        self.h_m.nrows()
    }
}

/// Computes every integral entering the Hamiltonian.
///
/// Orbitals must be orthonormal within `1e-8` in each species.
pub fn compute_integrals(
    grid: &SpatialGrid,
    orbitals: &OrbitalSet,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    interaction: &InteractionSpec,
) -> Result<IntegralTables> {
    orbitals.check(grid, 1e-8)?;
    interaction.check_grid(grid)?;
    let h_phi = orbitals
        .atomic
        .iter()
        .map(|f| grid.apply_one_body(atom, f))
        .collect::<Result<Vec<_>>>()?;
    let h_psi = orbitals
        .molecular
        .iter()
        .map(|f| grid.apply_one_body(molecule, f))
        .collect::<Result<Vec<_>>>()?;
    let ws = build_local_potentials(grid, orbitals, interaction)?;
    Ok(tables_from_parts(grid, orbitals, &h_phi, &h_psi, &ws))
}

/// Contracts precomputed `h|phi>` and local potentials into integral tables.
pub(crate) fn tables_from_parts(
    grid: &SpatialGrid,
    orbitals: &OrbitalSet,
    h_phi: &[GridFn],
    h_psi: &[GridFn],
    ws: &EomWorkspace,
) -> IntegralTables {
    let phi = &orbitals.atomic;
    let psi = &orbitals.molecular;
    let (m, mp) = (phi.len(), psi.len());
    let dx = grid.spacing();

    let one_body = |f: &[GridFn], hf: &[GridFn]| {
        let n = f.len();
        let mut h = Array2::zeros((n, n));
        for k in 0..n {
            for q in 0..n {
                h[[k, q]] = grid.inner_unchecked(&f[k], &hf[q]);
            }
        }
        // Symmetrize away the O(1e-16) asymmetry of the discrete operator.
        for k in 0..n {
            for q in 0..k {
                let v = 0.5 * (h[[k, q]] + h[[q, k]].conj());
                h[[k, q]] = v;
                h[[q, k]] = v.conj();
            }
            h[[k, k]] = Complex64::new(h[[k, k]].re, 0.0);
        }
        h
    };

    // sum_i conj(a_i) * pot_i * b_i * dx
    let sandwich = |a: &[Complex64], pot: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter()
            .zip(pot)
            .zip(b)
            .map(|((x, w), y)| x.conj() * w * y)
            .sum::<Complex64>()
            * dx
    };

    let mut w_a = Array4::zeros((m, m, m, m));
    for k in 0..m {
        for s in 0..m {
            for q in 0..m {
                for l in 0..m {
                    w_a[[k, s, q, l]] = sandwich(&phi[k], &ws.w_a[s][l], &phi[q]);
                }
            }
        }
    }
    let mut w_m = Array4::zeros((mp, mp, mp, mp));
    for k in 0..mp {
        for s in 0..mp {
            for q in 0..mp {
                for l in 0..mp {
                    w_m[[k, s, q, l]] = sandwich(&psi[k], &ws.w_m[s][l], &psi[q]);
                }
            }
        }
    }
    let mut w_am = Array4::zeros((m, mp, m, mp));
    for k in 0..m {
        for kp in 0..mp {
            for q in 0..m {
                for qp in 0..mp {
                    w_am[[k, kp, q, qp]] = sandwich(&phi[k], &ws.w_am[kp][qp], &phi[q]);
                }
            }
        }
    }
    let mut w_conv = Array3::zeros((mp, m, m));
    for kp in 0..mp {
        for k in 0..m {
            for q in 0..m {
                w_conv[[kp, k, q]] = grid.inner_unchecked(&psi[kp], &ws.w_conv[k][q]);
            }
        }
    }
    IntegralTables {
        h_a: one_body(phi, h_phi),
        h_m: one_body(psi, h_psi),
        w_a,
        w_m,
        w_am,
        w_conv,
    }
}

/// Hermitian sparse matrix stored as its upper triangle in coordinate form,
/// sorted by `(row, col)` with `row <= col`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    dimension: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHamiltonian {
    /// Builds from upper-triangle entries; duplicates are summed, diagonal
    /// imaginary parts dropped.
    pub fn from_upper(dimension: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r > c || c >= dimension {
                return Err(SolverError::Precondition(format!(
                    "entry ({r}, {c}) is not in the upper triangle of a {dimension}-dim matrix"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        for e in &mut merged {
            if e.0 == e.1 {
                e.2.im = 0.0;
            }
        }
        Ok(Self {
            dimension,
            entries: merged,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    /// `H[i][j]` using Hermitian completion.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let (r, c, conj) = if i <= j { (i, j, false) } else { (j, i, true) };
        match self.entries.binary_search_by_key(&(r, c), |&(a, b, _)| (a, b)) {
            Ok(pos) => {
                let v = self.entries[pos].2;
                if conj {
                    v.conj()
                } else {
                    v
                }
            }
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut out = Array2::zeros((self.dimension, self.dimension));
        for &(r, c, v) in &self.entries {
            out[[r, c]] = v;
            if r != c {
                out[[c, r]] = v.conj();
            }
        }
        out
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("matvec", self.dimension, x.len())?;
        let mut y = vec![ZERO; self.dimension];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v.conj() * x[r];
            }
        }
        Ok(y)
    }

    /// `<x|H|x>`, real for Hermitian `H`.
    pub fn expectation(&self, x: &[Complex64]) -> Result<f64> {
        let hx = self.matvec(x)?;
        Ok(x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum())
    }

    /// Coordinate dump `row col re im`, one stored entry per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for &(r, c, v) in &self.entries {
            let _ = writeln!(out, "{r} {c} {:.17e} {:.17e}", v.re, v.im);
        }
        out
    }
}

/// Accumulates one column of the matrix without allocation per term.
struct ColumnScratch {
    values: Vec<Complex64>,
    touched: Vec<usize>,
}

impl ColumnScratch {
    fn new(dim: usize) -> Self {
        Self {
            values: vec![ZERO; dim],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, row: usize, v: Complex64) {
        if self.values[row] == ZERO {
            self.touched.push(row);
        }
        self.values[row] += v;
        // Guard the rare exact cancellation so the row stays tracked once.
        if self.values[row] == ZERO {
            self.values[row] = Complex64::new(0.0, -0.0);
        }
    }

    fn drain_upper(&mut self, col: usize, out: &mut Vec<(usize, usize, Complex64)>) {
        self.touched.sort_unstable();
        self.touched.dedup();
        for &row in &self.touched {
            let v = self.values[row];
            if row <= col && (v.re != 0.0 || v.im != 0.0) {
                out.push((row, col, v));
            }
            self.values[row] = ZERO;
        }
        self.touched.clear();
    }
}

fn lookup(basis: &ConfigurationBasis, atoms: &[u32], mols: &[u32]) -> usize {
    basis
        .index_of(&Configuration::new(atoms.to_vec(), mols.to_vec()))
        .expect("particle-conserving term left the configuration basis")
}

/// Assembles the configuration-space Hamiltonian from integral tables.
pub fn assemble_hamiltonian(
    basis: &ConfigurationBasis,
    tables: &IntegralTables,
) -> Result<SparseHamiltonian> {
    check_len("atomic integral tables", basis.n_atomic(), tables.n_atomic())?;
    check_len("molecular integral tables", basis.n_molecular(), tables.n_molecular())?;
    let (m, mp) = (basis.n_atomic(), basis.n_molecular());
    let dim = basis.len();
    let mut entries = Vec::new();
    let mut col = ColumnScratch::new(dim);

    for (j, ket) in basis.configs().iter().enumerate() {
        let (mut a, mut c) = (ket.atom_occ.clone(), ket.mol_occ.clone());

        // Atomic one-body and two-body terms.
        for q in 0..m {
            let Some(aq) = lower(&mut a, q) else { continue };
            for k in 0..m {
                let ak = raise(&mut a, k);
                let h = tables.h_a[[k, q]];
                if h != ZERO {
                    col.add(lookup(basis, &a, &c), h * (aq * ak));
                }
                a[k] -= 1;
            }
            for l in 0..m {
                let Some(al) = lower(&mut a, l) else { continue };
                for s in 0..m {
                    let as_ = raise(&mut a, s);
                    for k in 0..m {
                        let ak = raise(&mut a, k);
                        let w = tables.w_a[[k, s, q, l]];
                        if w != ZERO {
                            col.add(lookup(basis, &a, &c), w * (0.5 * aq * al * as_ * ak));
                        }
                        a[k] -= 1;
                    }
                    a[s] -= 1;
                }
                a[l] += 1;
            }
            a[q] += 1;
        }

        // Molecular one-body and two-body terms.
        for q in 0..mp {
            let Some(cq) = lower(&mut c, q) else { continue };
            for k in 0..mp {
                let ck = raise(&mut c, k);
                let h = tables.h_m[[k, q]];
                if h != ZERO {
                    col.add(lookup(basis, &a, &c), h * (cq * ck));
                }
                c[k] -= 1;
            }
            for l in 0..mp {
                let Some(cl) = lower(&mut c, l) else { continue };
                for s in 0..mp {
                    let cs = raise(&mut c, s);
                    for k in 0..mp {
                        let ck = raise(&mut c, k);
                        let w = tables.w_m[[k, s, q, l]];
                        if w != ZERO {
                            col.add(lookup(basis, &a, &c), w * (0.5 * cq * cl * cs * ck));
                        }
                        c[k] -= 1;
                    }
                    c[s] -= 1;
                }
                c[l] += 1;
            }
            c[q] += 1;
        }

        // Inter-species b+_k b_q c+_k' c_q'.
        for qp in 0..mp {
            let Some(cq) = lower(&mut c, qp) else { continue };
            for kp in 0..mp {
                let ck = raise(&mut c, kp);
                for q in 0..m {
                    let Some(aq) = lower(&mut a, q) else { continue };
                    for k in 0..m {
                        let ak = raise(&mut a, k);
                        let w = tables.w_am[[k, kp, q, qp]];
                        if w != ZERO {
                            col.add(lookup(basis, &a, &c), w * (cq * ck * aq * ak));
                        }
                        a[k] -= 1;
                    }
                    a[q] += 1;
                }
                c[kp] -= 1;
            }
            c[qp] += 1;
        }

        col.drain_upper(j, &mut entries);
    }

    // Conversion block. For a configuration with p >= 1 and a molecule in k',
    // dissociating it into atoms (k, q) gives the p-1 partner; the stored
    // upper-triangle element is <partner| W(m->2a) |config>.
    let frac = std::f64::consts::FRAC_1_SQRT_2;
    for (i, bra) in basis.configs().iter().enumerate() {
        if bra.p() == 0 {
            continue;
        }
        for kp in 0..mp {
            let mk = bra.mol_occ[kp];
            if mk == 0 {
                continue;
            }
            for k in 0..m {
                for q in k..m {
                    let mut partner = bra.clone();
                    partner.mol_occ[kp] -= 1;
                    partner.atom_occ[k] += 1;
                    partner.atom_occ[q] += 1;
                    let Some(row) = basis.index_of(&partner) else {
                        continue;
                    };
                    let nk = f64::from(bra.atom_occ[k]);
                    let value = if k == q {
                        frac * (f64::from(mk) * (nk + 1.0) * (nk + 2.0)).sqrt()
                    } else {
                        // Both orderings (k, q) and (q, k) of b_k b_q contribute.
                        let nq = f64::from(bra.atom_occ[q]);
                        std::f64::consts::SQRT_2 * (f64::from(mk) * (nk + 1.0) * (nq + 1.0)).sqrt()
                    };
                    let w = tables.w_conv[[kp, k, q]];
                    if w != ZERO {
                        entries.push((row, i, (w * value).conj()));
                    }
                }
            }
        }
    }

    SparseHamiltonian::from_upper(dim, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{harmonic_eigenfunction, PotentialSpec};

    fn setup(n_points: usize) -> (SpatialGrid, OneBodyOperatorSpec, OneBodyOperatorSpec) {
        let grid = SpatialGrid::new(n_points, 16.0).unwrap();
        let va = PotentialSpec::Harmonic(1.0).sample(&grid, 1.0).unwrap();
        let vm = PotentialSpec::Harmonic(1.0).sample(&grid, 2.0).unwrap();
        let atom = OneBodyOperatorSpec::new(&grid, 1.0, va, 0.0).unwrap();
        let mol = OneBodyOperatorSpec::new(&grid, 2.0, vm, 0.0).unwrap();
        (grid, atom, mol)
    }

    fn gaussian_set(grid: &SpatialGrid) -> OrbitalSet {
        OrbitalSet {
            atomic: vec![harmonic_eigenfunction(grid, 1.0, 1.0, 0)],
            molecular: vec![harmonic_eigenfunction(grid, 1.0, 1.0, 0)],
        }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn contact_conversion_integral() {
        let (grid, atom, mol) = setup(128);
        let orb = gaussian_set(&grid);
        let couplings = Couplings {
            lambda_con: 0.7,
            ..Default::default()
        };
        let t = compute_integrals(&grid, &orb, &atom, &mol, &InteractionSpec::Contact(couplings))
            .unwrap();
        let g = &orb.atomic[0];
        let g2: GridFn = g.iter().map(|v| v * v).collect();
        let expect = grid.inner(g, &g2).unwrap() * 0.7;
        assert!(close(t.w_conv[[0, 0, 0]], expect, 1e-14));

        let off = compute_integrals(
            &grid,
            &orb,
            &atom,
            &mol,
            &InteractionSpec::Contact(Couplings {
                lambda_a: 1.0,
                ..Default::default()
            }),
        )
        .unwrap();
        assert!(off.w_conv.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn delta_kernel_matches_contact_integrals() {
        let (grid, atom, mol) = setup(64);
        let couplings = Couplings {
            lambda_a: 0.3,
            lambda_m: -0.2,
            lambda_am: 0.15,
            lambda_con: 0.4,
        };
        let orb = OrbitalSet {
            atomic: vec![
                harmonic_eigenfunction(&grid, 1.0, 1.0, 0),
                harmonic_eigenfunction(&grid, 1.0, 1.0, 1),
            ],
            molecular: vec![
                harmonic_eigenfunction(&grid, 2.0, 1.0, 0),
                harmonic_eigenfunction(&grid, 2.0, 1.0, 1),
            ],
        };
        let contact =
            compute_integrals(&grid, &orb, &atom, &mol, &InteractionSpec::Contact(couplings))
                .unwrap();
        let general = compute_integrals(
            &grid,
            &orb,
            &atom,
            &mol,
            &InteractionSpec::General(GeneralKernels::discrete_delta(&grid, couplings)),
        )
        .unwrap();
        for (a, b) in contact.w_a.iter().zip(general.w_a.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
        for (a, b) in contact.w_m.iter().zip(general.w_m.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
        for (a, b) in contact.w_am.iter().zip(general.w_am.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
        for (a, b) in contact.w_conv.iter().zip(general.w_conv.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
    }

    #[test]
    fn conversion_integral_is_symmetric() {
        let (grid, atom, mol) = setup(64);
        let orb = OrbitalSet {
            atomic: vec![
                harmonic_eigenfunction(&grid, 1.0, 1.0, 0),
                harmonic_eigenfunction(&grid, 1.0, 1.0, 1),
            ],
            molecular: vec![harmonic_eigenfunction(&grid, 2.0, 1.0, 1)],
        };
        let kernels = GeneralKernels::gaussian(
            &grid,
            Couplings {
                lambda_con: 1.0,
                ..Default::default()
            },
            0.7,
        )
        .unwrap();
        let t = compute_integrals(&grid, &orb, &atom, &mol, &InteractionSpec::General(kernels))
            .unwrap();
        assert!(close(t.w_conv[[0, 0, 1]], t.w_conv[[0, 1, 0]], 1e-12));
        for k in 0..2 {
            for q in 0..2 {
                assert!(close(t.h_a[[k, q]], t.h_a[[q, k]].conj(), 1e-10));
            }
        }
    }

    #[test]
    fn two_mode_matrix_elements() {
        let (grid, atom, mol) = setup(128);
        let orb = gaussian_set(&grid);
        let c = Couplings {
            lambda_a: 0.25,
            lambda_con: 0.6,
            ..Default::default()
        };
        let t = compute_integrals(&grid, &orb, &atom, &mol, &InteractionSpec::Contact(c)).unwrap();
        let g = &orb.atomic[0];
        let g2: GridFn = g.iter().map(|v| v * v).collect();
        let overlap = grid.inner(g, &g2).unwrap();
        let quartic = grid.inner(&g2, &g2).unwrap();

        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        let h = assemble_hamiltonian(&basis, &t).unwrap();
        assert!(close(h.get(1, 0), overlap.conj() * 0.6, 1e-13));
        assert!(close(h.get(0, 1), overlap * 0.6, 1e-13));

        let basis = ConfigurationBasis::enumerate(4, 1, 1).unwrap();
        let h = assemble_hamiltonian(&basis, &t).unwrap();
        let expect = t.h_a[[0, 0]] * 4.0 + quartic * (0.25 / 2.0 * 12.0);
        assert!(close(h.get(0, 0), expect, 1e-12));
        assert_eq!(h.get(0, 2), ZERO);
    }

    #[test]
    fn zero_hamiltonian_for_free_uniform_orbitals() {
        let grid = SpatialGrid::new(16, 4.0).unwrap();
        let spec = OneBodyOperatorSpec::new(&grid, 1.0, vec![0.0; 16], 0.0).unwrap();
        let flat = vec![Complex64::new(0.5, 0.0); 16];
        let orb = OrbitalSet {
            atomic: vec![flat.clone()],
            molecular: vec![flat],
        };
        let t = compute_integrals(
            &grid,
            &orb,
            &spec,
            &spec,
            &InteractionSpec::Contact(Couplings::default()),
        )
        .unwrap();
        let basis = ConfigurationBasis::enumerate(6, 1, 1).unwrap();
        let h = assemble_hamiltonian(&basis, &t).unwrap();
        assert!(h.entries().iter().all(|e| e.2.norm() < 1e-14));
    }

    #[test]
    fn matvec_against_dense() {
        let entries = vec![
            (0, 0, Complex64::new(1.0, 0.0)),
            (0, 2, Complex64::new(0.5, -0.25)),
            (1, 1, Complex64::new(-2.0, 0.0)),
            (1, 2, Complex64::new(0.0, 1.5)),
        ];
        let h = SparseHamiltonian::from_upper(3, entries).unwrap();
        let x = vec![
            Complex64::new(0.3, 0.1),
            Complex64::new(-0.2, 0.4),
            Complex64::new(0.7, -0.5),
        ];
        let dense = h.to_dense();
        let y = h.matvec(&x).unwrap();
        for i in 0..3 {
            let expect: Complex64 = (0..3).map(|j| dense[[i, j]] * x[j]).sum();
            assert!(close(y[i], expect, 1e-15));
        }
        assert!(h.matvec(&x[..2]).is_err());
        let zero = SparseHamiltonian::from_upper(3, vec![]).unwrap();
        assert!(zero.matvec(&x).unwrap().iter().all(|v| *v == ZERO));
        let ident =
            SparseHamiltonian::from_upper(3, (0..3).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect())
                .unwrap();
        assert_eq!(ident.matvec(&x).unwrap(), x);
        assert!(SparseHamiltonian::from_upper(3, vec![(2, 1, ZERO)]).is_err());
        assert_eq!(h.dump().lines().count(), 4);
    }
}
