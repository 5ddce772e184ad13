//! Right-hand sides of the coupled orbital and coefficient equations of motion.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{check_len, Result, SolverError};
use crate::grid::{GridFn, OneBodyOperatorSpec, SpatialGrid};
use crate::hamiltonian::{Couplings, InteractionSpec, Kernel, SparseHamiltonian};
use crate::rdm::{regularized_inverse, RdmBundle};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Atomic orbitals `phi_k` and molecular orbitals `psi_k'` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalSet {
    pub atomic: Vec<GridFn>,
    pub molecular: Vec<GridFn>,
}

fn overlap(grid: &SpatialGrid, f: &[GridFn]) -> DMatrix<Complex64> {
    let n = f.len();
    DMatrix::from_fn(n, n, |k, q| grid.inner_unchecked(&f[k], &f[q]))
}

fn lowdin(grid: &SpatialGrid, f: &[GridFn]) -> Result<Vec<GridFn>> {
    if f.is_empty() {
        return Ok(Vec::new());
    }
    let s = overlap(grid, f);
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14)) {
        return Err(SolverError::Precondition(
            "orbitals are linearly dependent; cannot orthonormalize".into(),
        ));
    }
    let u = &eig.eigenvectors;
    let n = f.len();
    let inv_sqrt = DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|a| u[(i, a)] * (1.0 / eig.eigenvalues[a].sqrt()) * u[(j, a)].conj())
            .sum::<Complex64>()
    });
    let npts = f[0].len();
    Ok((0..n)
        .map(|k| {
            let mut out = vec![ZERO; npts];
            for (j, fj) in f.iter().enumerate() {
                let c = inv_sqrt[(j, k)];
                for (o, v) in out.iter_mut().zip(fj) {
                    *o += c * v;
                }
            }
            out
        })
        .collect())
}

impl OrbitalSet {
    pub fn n_atomic(&self) -> usize {
        self.atomic.len()
    }

    pub fn n_molecular(&self) -> usize {
        self.molecular.len()
    }

    /// Checks sample counts and orthonormality of both species within `tol`.
    pub fn check(&self, grid: &SpatialGrid, tol: f64) -> Result<()> {
        for f in self.atomic.iter().chain(&self.molecular) {
            check_len("orbital samples", grid.n_points(), f.len())?;
        }
        for (name, set) in [("atomic", &self.atomic), ("molecular", &self.molecular)] {
            let dev = self::orthonormality_error(grid, set);
            if dev > tol {
                return Err(SolverError::Precondition(format!(
                    "{name} orbitals are not orthonormal (max deviation {dev:e})"
                )));
            }
        }
        Ok(())
    }

    /// Largest `|<f_k|f_q> - delta_kq|` over both species.
    pub fn orthonormality_drift(&self, grid: &SpatialGrid) -> f64 {
        orthonormality_error(grid, &self.atomic).max(orthonormality_error(grid, &self.molecular))
    }

    /// Symmetric (Loewdin) orthonormalization of each species.
    pub fn orthonormalized(&self, grid: &SpatialGrid) -> Result<Self> {
        Ok(Self {
            atomic: lowdin(grid, &self.atomic)?,
            molecular: lowdin(grid, &self.molecular)?,
        })
    }

    pub(crate) fn all(&self) -> impl Iterator<Item = &GridFn> {
        self.atomic.iter().chain(&self.molecular)
    }
}

fn orthonormality_error(grid: &SpatialGrid, f: &[GridFn]) -> f64 {
    let s = overlap(grid, f);
    let mut dev: f64 = 0.0;
    for k in 0..f.len() {
        for q in 0..f.len() {
            let target = if k == q { 1.0 } else { 0.0 };
            dev = dev.max((s[(k, q)] - target).norm());
        }
    }
    dev
}

/// `f - sum_u |u><u|f>`.
pub fn project_out(grid: &SpatialGrid, span: &[GridFn], f: &mut [Complex64]) {
    for u in span {
        let c = grid.inner_unchecked(u, f);
        for (v, uv) in f.iter_mut().zip(u) {
            *v -= c * uv;
        }
    }
}

/// Time-dependent local potentials built from the current orbitals.
///
/// * `w_a[s][l]`, `w_m[s'][l']`: same-species mean fields,
/// * `w_am[k'][q']` acts on atoms, `w_ma[k][q]` on molecules,
/// * `w_conv[k][q]` lives on the molecular coordinate (pair of atoms to one molecule),
/// * `w_conv_back[q][k']` acts on atoms (molecule dissociating into atom `q` and a partner).
#[derive(Debug, Clone, PartialEq)]
pub struct EomWorkspace {
    pub w_a: Vec<Vec<GridFn>>,
    pub w_m: Vec<Vec<GridFn>>,
    pub w_am: Vec<Vec<GridFn>>,
    pub w_ma: Vec<Vec<GridFn>>,
    pub w_conv: Vec<Vec<GridFn>>,
    pub w_conv_back: Vec<Vec<GridFn>>,
}

fn pair_products<F>(a: &[GridFn], b: &[GridFn], f: F) -> Vec<Vec<GridFn>>
where
    F: Fn(&GridFn, &GridFn) -> GridFn,
{
    a.iter()
        .map(|x| b.iter().map(|y| f(x, y)).collect())
        .collect()
}

/// `(K * (conj(f) g))(x_i) = sum_j K_ij conj(f_j) g_j dx`.
fn convolve_density(grid: &SpatialGrid, kernel: &Kernel, f: &[Complex64], g: &[Complex64]) -> GridFn {
    let dx = grid.spacing();
    let dens: Vec<Complex64> = f.iter().zip(g).map(|(a, b)| a.conj() * b).collect();
    (0..grid.n_points())
        .map(|i| {
            kernel
                .row(i)
                .iter()
                .zip(&dens)
                .map(|(k, d)| d * *k)
                .sum::<Complex64>()
                * dx
        })
        .collect()
}

/// Molecular orbital at the pair midpoint `(x_a + x_b) / 2`.
struct Midpoints {
    on_grid: GridFn,
    half: GridFn,
}

impl Midpoints {
    fn new(grid: &SpatialGrid, psi: &[Complex64]) -> Result<Self> {
        Ok(Self {
            on_grid: psi.to_vec(),
            half: grid.interpolate_half_points(psi, 0.5 * grid.spacing())?,
        })
    }

    #[inline]
    fn at(&self, a: usize, b: usize) -> Complex64 {
        let s = a + b;
        if s % 2 == 0 {
            self.on_grid[s / 2]
        } else {
            self.half[s / 2]
        }
    }
}

/// Builds all local potentials for the given interaction.
pub fn build_local_potentials(
    grid: &SpatialGrid,
    orbitals: &OrbitalSet,
    interaction: &InteractionSpec,
) -> Result<EomWorkspace> {
    for f in orbitals.all() {
        check_len("orbital samples", grid.n_points(), f.len())?;
    }
    interaction.check_grid(grid)?;
    let phi = &orbitals.atomic;
    let psi = &orbitals.molecular;
    match interaction {
        InteractionSpec::Contact(c) => {
            let scaled = |lambda: f64| {
                move |x: &GridFn, y: &GridFn| -> GridFn {
                    x.iter().zip(y).map(|(a, b)| a.conj() * b * lambda).collect()
                }
            };
            let plain = |lambda: f64| {
                move |x: &GridFn, y: &GridFn| -> GridFn {
                    x.iter().zip(y).map(|(a, b)| a * b * lambda).collect()
                }
            };
            Ok(EomWorkspace {
                w_a: pair_products(phi, phi, scaled(c.lambda_a)),
                w_m: pair_products(psi, psi, scaled(c.lambda_m)),
                w_am: pair_products(psi, psi, scaled(c.lambda_am)),
                w_ma: pair_products(phi, phi, scaled(c.lambda_am)),
                w_conv: pair_products(phi, phi, plain(c.lambda_con)),
                w_conv_back: pair_products(phi, psi, scaled(c.lambda_con)),
            })
        }
        InteractionSpec::General(k) => {
            let n = grid.n_points();
            let dx = grid.spacing();
            fn conv<'a>(
                grid: &'a SpatialGrid,
                kern: &'a Kernel,
            ) -> impl Fn(&GridFn, &GridFn) -> GridFn + 'a {
                move |x, y| convolve_density(grid, kern, x, y)
            }
            let mids = psi
                .iter()
                .map(|p| Midpoints::new(grid, p))
                .collect::<Result<Vec<_>>>()?;

            // Sum over pairs (a, b) whose midpoint is grid point i (full weight)
            // or a neighbouring half point (half weight): the adjoint of `Midpoints`.
            let w_conv = pair_products(phi, phi, |fk, fq| {
                let mut out = vec![ZERO; n];
                for a in 0..n {
                    let row = k.conversion.row(a);
                    for b in 0..n {
                        let v = fk[a] * fq[b] * row[b];
                        let s = a + b;
                        if s % 2 == 0 {
                            out[s / 2] += v;
                        } else {
                            out[s / 2] += 0.5 * v;
                            out[s / 2 + 1] += 0.5 * v;
                        }
                    }
                }
                out.iter_mut().for_each(|v| *v *= dx);
                out
            });
            let w_conv_back = phi
                .iter()
                .map(|fq| {
                    mids.iter()
                        .map(|mid| {
                            (0..n)
                                .map(|a| {
                                    let row = k.conversion.row(a);
                                    (0..n)
                                        .map(|b| fq[b].conj() * row[b] * mid.at(a, b))
                                        .sum::<Complex64>()
                                        * dx
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Ok(EomWorkspace {
                w_a: pair_products(phi, phi, conv(grid, &k.atom)),
                w_m: pair_products(psi, psi, conv(grid, &k.molecule)),
                w_am: pair_products(psi, psi, conv(grid, &k.mixed)),
                w_ma: pair_products(phi, phi, conv(grid, &k.mixed)),
                w_conv,
                w_conv_back,
            })
        }
    }
}

/// Projected mean-field brackets `P[h f_j + sum_k rho^-1_jk (...)_k]` for both
/// species. The orbital time derivative is `-i` times this in real time and
/// `-1` times this in imaginary time.
pub(crate) fn mean_field_forces(
    grid: &SpatialGrid,
    orbitals: &OrbitalSet,
    h_phi: &[GridFn],
    h_psi: &[GridFn],
    rdms: &RdmBundle,
    ws: &EomWorkspace,
    eps: f64,
) -> Result<OrbitalSet> {
    let phi = &orbitals.atomic;
    let psi = &orbitals.molecular;
    let (m, mp) = (phi.len(), psi.len());
    let n = grid.n_points();
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut a_terms = vec![vec![ZERO; n]; m];
    for (k, out) in a_terms.iter_mut().enumerate() {
        for q in 0..m {
            let mut field = vec![ZERO; n];
            for s in 0..m {
                for l in 0..m {
                    let r = rdms.rho_a2[[k, s, l, q]];
                    if r != ZERO {
                        axpy(&mut field, r, &ws.w_a[s][l]);
                    }
                }
            }
            for kp in 0..mp {
                for qp in 0..mp {
                    let r = rdms.rho_am[[k, kp, q, qp]];
                    if r != ZERO {
                        axpy(&mut field, r, &ws.w_am[kp][qp]);
                    }
                }
            }
            for (o, (f, p)) in out.iter_mut().zip(field.iter().zip(&phi[q])) {
                *o += f * p;
            }
            for kp in 0..mp {
                let r = rdms.rho_conv[[kp, k, q]].conj();
                if r != ZERO {
                    axpy(out, sqrt2 * r, &ws.w_conv_back[q][kp]);
                }
            }
        }
    }

    let mut b_terms = vec![vec![ZERO; n]; mp];
    for (kp, out) in b_terms.iter_mut().enumerate() {
        for qp in 0..mp {
            let mut field = vec![ZERO; n];
            for s in 0..mp {
                for l in 0..mp {
                    let r = rdms.rho_m2[[kp, s, l, qp]];
                    if r != ZERO {
                        axpy(&mut field, r, &ws.w_m[s][l]);
                    }
                }
            }
            for k in 0..m {
                for q in 0..m {
                    let r = rdms.rho_am[[k, kp, q, qp]];
                    if r != ZERO {
                        axpy(&mut field, r, &ws.w_ma[k][q]);
                    }
                }
            }
            for (o, (f, p)) in out.iter_mut().zip(field.iter().zip(&psi[qp])) {
                *o += f * p;
            }
        }
        for k in 0..m {
            for q in 0..m {
                let r = rdms.rho_conv[[kp, k, q]];
                if r != ZERO {
                    axpy(out, r / sqrt2, &ws.w_conv[k][q]);
                }
            }
        }
    }

    let finish = |h_f: &[GridFn], terms: &[GridFn], rho: &Array2<Complex64>, span: &[GridFn]| {
        let inv = regularized_inverse(rho, eps)?;
        let mut out = Vec::with_capacity(span.len());
        for (j, hf) in h_f.iter().enumerate() {
            let mut f = hf.clone();
            for (k, t) in terms.iter().enumerate() {
                let c = inv[[j, k]];
                if c != ZERO {
                    axpy(&mut f, c, t);
                }
            }
            project_out(grid, span, &mut f);
            out.push(f);
        }
        Ok::<_, SolverError>(out)
    };

    Ok(OrbitalSet {
        atomic: finish(h_phi, &a_terms, &rdms.rho_a, phi)?,
        molecular: finish(h_psi, &b_terms, &rdms.rho_m, psi)?,
    })
}

#[inline]
fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Real-time orbital derivatives `d phi_j / dt`, `d psi_j' / dt`.
pub fn orbital_rhs(
    grid: &SpatialGrid,
    orbitals: &OrbitalSet,
    rdms: &RdmBundle,
    workspace: &EomWorkspace,
    atom: &OneBodyOperatorSpec,
    molecule: &OneBodyOperatorSpec,
    eps: f64,
) -> Result<OrbitalSet> {
    orbitals.check(grid, 1e-8)?;
    check_len("atomic density matrix", orbitals.n_atomic(), rdms.rho_a.nrows())?;
    check_len("molecular density matrix", orbitals.n_molecular(), rdms.rho_m.nrows())?;
    check_len("atomic local potentials", orbitals.n_atomic(), workspace.w_a.len())?;
    check_len("molecular local potentials", orbitals.n_molecular(), workspace.w_m.len())?;
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
    let mut forces = mean_field_forces(grid, orbitals, &h_phi, &h_psi, rdms, workspace, eps)?;
    for f in forces.atomic.iter_mut().chain(forces.molecular.iter_mut()) {
        for v in f.iter_mut() {
            if !v.is_finite() {
                return Err(SolverError::NonFinite {
                    what: "orbital right-hand side".into(),
                    time: f64::NAN,
                });
            }
            *v *= -I;
        }
    }
    Ok(forces)
}

/// `dC/dt = -i H C`.
pub fn coefficient_rhs(h: &SparseHamiltonian, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = h.matvec(coeffs)?;
    out.iter_mut().for_each(|v| *v *= -I);
    Ok(out)
}

/// Time-dependent couplings of the one-atomic-, one-molecular-orbital theory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldCouplings {
    pub lambda_a: f64,
    pub lambda_am: f64,
    pub lambda_con: Complex64,
    pub lambda_m: f64,
    pub lambda_ma: f64,
    pub lambda_con_m: Complex64,
    /// Set when `<N_a>` fell below the regularization floor.
    pub atoms_regularized: bool,
    /// Set when `<N_m>` fell below the regularization floor.
    pub molecules_regularized: bool,
}

impl MeanFieldCouplings {
    /// Builds the couplings from raw expectation values; denominators are
    /// floored at `eps`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_expectations(
        c: Couplings,
        n_a: f64,
        n_m: f64,
        n_a_pairs: f64,
        n_m_pairs: f64,
        n_a_n_m: f64,
        conversion: Complex64,
        eps: f64,
    ) -> Self {
        let da = n_a.max(eps);
        let dm = n_m.max(eps);
        Self {
            lambda_a: c.lambda_a * n_a_pairs / da,
            lambda_am: c.lambda_am * n_a_n_m / da,
            lambda_con: c.lambda_con * conversion.conj() / da,
            lambda_m: c.lambda_m * n_m_pairs / dm,
            lambda_ma: c.lambda_am * n_a_n_m / dm,
            lambda_con_m: c.lambda_con * conversion / dm,
            atoms_regularized: n_a < eps,
            molecules_regularized: n_m < eps,
        }
    }
}

/// Mean-field couplings from density matrices of a state with one atomic and
/// one molecular orbital. `lambda_con` carries `<b+ b+ c>`, `lambda_con_m`
/// carries `<c+ b b>`.
pub fn meanfield_couplings(rdms: &RdmBundle, c: Couplings, eps: f64) -> Result<MeanFieldCouplings> {
    if rdms.rho_a.nrows() != 1 || rdms.rho_m.nrows() != 1 {
        return Err(SolverError::Precondition(
            "mean-field couplings need exactly one atomic and one molecular orbital".into(),
        ));
    }
    Ok(MeanFieldCouplings::from_expectations(
        c,
        rdms.rho_a[[0, 0]].re,
        rdms.rho_m[[0, 0]].re,
        rdms.rho_a2[[0, 0, 0, 0]].re,
        rdms.rho_m2[[0, 0, 0, 0]].re,
        rdms.rho_am[[0, 0, 0, 0]].re,
        rdms.rho_conv[[0, 0, 0]],
        eps,
    ))
}
