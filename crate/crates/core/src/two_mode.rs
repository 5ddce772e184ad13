//! Coherent conversion mean field: one atomic orbital, one molecular orbital,
//! and coefficients `C_p` over `|N - 2p, p>`.
//!
//! Everything here is written from closed-form expressions in the molecule
//! number `p` and does not use the general configuration machinery, so it can
//! serve as an independent check of it.

use ndarray::Array2;
use num_complex::Complex64;

use crate::eom::MeanFieldCouplings;
use crate::error::{check_len, Result, SolverError};
use crate::grid::{GridFn, OneBodyOperatorSpec, SpatialGrid};
use crate::hamiltonian::Couplings;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    pub n_particles: u32,
    pub phi: GridFn,
    pub psi: GridFn,
    /// `c[p]` multiplies `|N - 2p, p>`.
    pub c: Vec<Complex64>,
}

impl TwoModeState {
    pub fn new(n_particles: u32, phi: GridFn, psi: GridFn, c: Vec<Complex64>) -> Result<Self> {
        check_len("two-mode coefficients", n_particles as usize / 2 + 1, c.len())?;
        check_len("two-mode orbitals", phi.len(), psi.len())?;
        Ok(Self {
            n_particles,
            phi,
            psi,
            c,
        })
    }

    /// Checks normalization of both orbitals and of `C` within `tol`.
    pub fn check(&self, grid: &SpatialGrid, tol: f64) -> Result<()> {
        check_len("two-mode orbital samples", grid.n_points(), self.phi.len())?;
        check_len("two-mode orbital samples", grid.n_points(), self.psi.len())?;
        let np = grid.norm(&self.phi);
        let nm = grid.norm(&self.psi);
        let nc = self.c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for (what, v) in [("atomic orbital", np), ("molecular orbital", nm), ("coefficients", nc)] {
            if (v - 1.0).abs() > tol {
                return Err(SolverError::Precondition(format!("{what} has norm {v}, expected 1")));
            }
        }
        Ok(())
    }

    fn atoms(&self, p: usize) -> f64 {
        f64::from(self.n_particles) - 2.0 * p as f64
    }
}

/// Species-number moments and the conversion coherence of a two-mode state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeExpectations {
    pub n_a: f64,
    pub n_m: f64,
    /// `<N_a (N_a - 1)>`
    pub n_a_pairs: f64,
    /// `<N_m (N_m - 1)>`
    pub n_m_pairs: f64,
    /// `<N_a N_m>`
    pub n_a_n_m: f64,
    /// `<c+ b b>`
    pub conversion: Complex64,
}

pub fn expectations(state: &TwoModeState) -> TwoModeExpectations {
    let mut e = TwoModeExpectations {
        n_a: 0.0,
        n_m: 0.0,
        n_a_pairs: 0.0,
        n_m_pairs: 0.0,
        n_a_n_m: 0.0,
        conversion: ZERO,
    };
    for (p, cp) in state.c.iter().enumerate() {
        let w = cp.norm_sqr();
        let na = state.atoms(p);
        let nm = p as f64;
        e.n_a += na * w;
        e.n_m += nm * w;
        e.n_a_pairs += na * (na - 1.0) * w;
        e.n_m_pairs += nm * (nm - 1.0) * w;
        e.n_a_n_m += na * nm * w;
        if p >= 1 {
            let amp = (nm * (na + 1.0) * (na + 2.0)).sqrt();
            e.conversion += cp.conj() * state.c[p - 1] * amp;
        }
    }
    e
}

pub fn two_mode_couplings(state: &TwoModeState, c: Couplings, eps: f64) -> MeanFieldCouplings {
    let e = expectations(state);
    MeanFieldCouplings::from_expectations(
        c,
        e.n_a,
        e.n_m,
        e.n_a_pairs,
        e.n_m_pairs,
        e.n_a_n_m,
        e.conversion,
        eps,
    )
}

fn project(grid: &SpatialGrid, u: &[Complex64], f: &mut [Complex64]) {
    let c = grid.inner_unchecked(u, f);
    for (v, uv) in f.iter_mut().zip(u) {
        *v -= c * uv;
    }
}

fn brackets(
    grid: &SpatialGrid,
    state: &TwoModeState,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    mf: &MeanFieldCouplings,
) -> Result<(GridFn, GridFn)> {
    let (phi, psi) = (&state.phi, &state.psi);
    let h_phi = grid.apply_one_body(atom, phi)?;
    let h_psi = grid.apply_one_body(molecule, psi)?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let fa = (0..phi.len())
        .map(|i| {
            h_phi[i]
                + (mf.lambda_a * phi[i].norm_sqr() + mf.lambda_am * psi[i].norm_sqr()) * phi[i]
                + sqrt2 * mf.lambda_con * phi[i].conj() * psi[i]
        })
        .collect();
    let fm = (0..psi.len())
        .map(|i| {
            h_psi[i]
                + (mf.lambda_m * psi[i].norm_sqr() + mf.lambda_ma * phi[i].norm_sqr()) * psi[i]
                + mf.lambda_con_m / sqrt2 * phi[i] * phi[i]
        })
        .collect();
    Ok((fa, fm))
}

/// Real-time orbital derivatives `(d phi / dt, d psi / dt)`.
pub fn two_mode_orbital_rhs(
    grid: &SpatialGrid,
    state: &TwoModeState,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    couplings: Couplings,
    eps: f64,
) -> Result<(GridFn, GridFn)> {
    state.check(grid, 1e-8)?;
    let mf = two_mode_couplings(state, couplings, eps);
    let (mut fa, mut fm) = brackets(grid, state, atom, molecule, &mf)?;
    project(grid, &state.phi, &mut fa);
    project(grid, &state.psi, &mut fm);
    fa.iter_mut().for_each(|v| *v *= -I);
    fm.iter_mut().for_each(|v| *v *= -I);
    Ok((fa, fm))
}

/// Matrix `<N - 2p, p| H |N - 2p', p'>`, tridiagonal in `p`.
pub fn two_mode_coefficient_matrix(
    grid: &SpatialGrid,
    state: &TwoModeState,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    couplings: Couplings,
) -> Result<Array2<Complex64>> {
    state.check(grid, 1e-8)?;
    let (phi, psi) = (&state.phi, &state.psi);
    let dx = grid.spacing();
    let h_a = grid.inner(phi, &grid.apply_one_body(atom, phi)?)?.re;
    let h_m = grid.inner(psi, &grid.apply_one_body(molecule, psi)?)?.re;
    let quartic = |f: &GridFn| f.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * dx;
    let phi4 = quartic(phi);
    let psi4 = quartic(psi);
    let mixed: f64 = phi
        .iter()
        .zip(psi)
        .map(|(a, b)| a.norm_sqr() * b.norm_sqr())
        .sum::<f64>()
        * dx;
    let overlap: Complex64 = psi
        .iter()
        .zip(phi)
        .map(|(b, a)| b.conj() * a * a)
        .sum::<Complex64>()
        * dx;

    let dim = state.c.len();
    let mut h = Array2::zeros((dim, dim));
    for p in 0..dim {
        let na = state.atoms(p);
        let nm = p as f64;
        let diag = na * h_a
            + 0.5 * couplings.lambda_a * na * (na - 1.0) * phi4
            + nm * h_m
            + 0.5 * couplings.lambda_m * nm * (nm - 1.0) * psi4
            + couplings.lambda_am * nm * na * mixed;
        h[[p, p]] = Complex64::new(diag, 0.0);
        if p >= 1 {
            let v = couplings.lambda_con / std::f64::consts::SQRT_2
                * (nm * (na + 1.0) * (na + 2.0)).sqrt()
                * overlap;
            h[[p, p - 1]] = v;
            h[[p - 1, p]] = v.conj();
        }
    }
    Ok(h)
}

/// `C+ H C` with the two-mode matrix.
pub fn two_mode_energy(
    grid: &SpatialGrid,
    state: &TwoModeState,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    couplings: Couplings,
) -> Result<f64> {
    let h = two_mode_coefficient_matrix(grid, state, atom, molecule, couplings)?;
    let mut e = ZERO;
    for (i, ci) in state.c.iter().enumerate() {
        for (j, cj) in state.c.iter().enumerate() {
            e += ci.conj() * h[[i, j]] * cj;
        }
    }
    Ok(e.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeResiduals {
    /// Norm of `L_a phi - mu_a phi` for the number-weighted stationary operator.
    pub orbital_a: f64,
    pub orbital_m: f64,
    /// `|| H C - eps C ||`.
    pub coefficient: f64,
    pub energy: f64,
    pub mu_a: Complex64,
    pub mu_m: Complex64,
}

/// Residuals of the stationary two-mode equations. The orbital equations are
/// used in their number-weighted form (multiplied through by `<N_a>`,
/// `<N_m>`), so no division by an empty species occurs, and the chemical
/// potentials are obtained by projection.
pub fn two_mode_stationary_residual(
    grid: &SpatialGrid,
    state: &TwoModeState,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    couplings: Couplings,
) -> Result<TwoModeResiduals> {
    state.check(grid, 1e-8)?;
    let e = expectations(state);
    // Unit denominators turn the couplings into the number-weighted moments.
    let weighted = MeanFieldCouplings::from_expectations(
        couplings,
        1.0,
        1.0,
        e.n_a_pairs,
        e.n_m_pairs,
        e.n_a_n_m,
        e.conversion,
        0.0,
    );
    let h_phi = grid.apply_one_body(atom, &state.phi)?;
    let h_psi = grid.apply_one_body(molecule, &state.psi)?;
    let (fa, fm) = brackets(grid, state, atom, molecule, &weighted)?;
    // brackets() includes h once; rescale that part to <N> h.
    let la: GridFn = fa
        .iter()
        .zip(&h_phi)
        .map(|(f, h)| f + (e.n_a - 1.0) * h)
        .collect();
    let lm: GridFn = fm
        .iter()
        .zip(&h_psi)
        .map(|(f, h)| f + (e.n_m - 1.0) * h)
        .collect();
    let mu_a = grid.inner(&state.phi, &la)?;
    let mu_m = grid.inner(&state.psi, &lm)?;
    let res = |l: &GridFn, f: &GridFn, mu: Complex64| {
        let r: GridFn = l.iter().zip(f).map(|(a, b)| a - mu * b).collect();
        grid.norm(&r)
    };

    let h = two_mode_coefficient_matrix(grid, state, atom, molecule, couplings)?;
    let dim = state.c.len();
    let hc: Vec<Complex64> = (0..dim)
        .map(|i| (0..dim).map(|j| h[[i, j]] * state.c[j]).sum())
        .collect();
    let energy: f64 = state.c.iter().zip(&hc).map(|(c, v)| (c.conj() * v).re).sum();
    let coefficient = hc
        .iter()
        .zip(&state.c)
        .map(|(v, c)| (v - energy * c).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(TwoModeResiduals {
        orbital_a: res(&la, &state.phi, mu_a),
        orbital_m: res(&lm, &state.psi, mu_m),
        coefficient,
        energy,
        mu_a,
        mu_m,
    })
}
