//! Reduced density matrices of a configuration-space state.

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{check_len, Result, SolverError};
use crate::fock::{lower, raise, Configuration, ConfigurationBasis};
use crate::grid::{GridFn, SpatialGrid};
use crate::hamiltonian::IntegralTables;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default regularization strength of [`regularized_inverse`].
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

/// All one- and two-body reduced density matrices.
///
/// * `rho_a[[k, q]] = <b+_k b_q>`, `rho_m[[k', q']] = <c+_k' c_q'>`
/// * `rho_a2[[k, s, l, q]] = <b+_k b+_s b_l b_q>`, same layout for `rho_m2`
/// * `rho_am[[k, k', q, q']] = <b+_k b_q c+_k' c_q'>`
/// * `rho_conv[[k', k, q]] = <c+_k' b_k b_q>`; the reverse process is its conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct RdmBundle {
    pub rho_a: Array2<Complex64>,
    pub rho_m: Array2<Complex64>,
    pub rho_a2: Array4<Complex64>,
    pub rho_m2: Array4<Complex64>,
    pub rho_am: Array4<Complex64>,
    pub rho_conv: Array3<Complex64>,
}

impl RdmBundle {
    /// `<b+_q b+_q b_k> ` element `rho^(m->2a)_qkk'`, i.e. `conj(rho_conv[[k', k, q]])`.
    pub fn rho_dissociation(&self, q: usize, k: usize, kp: usize) -> Complex64 {
        self.rho_conv[[kp, k, q]].conj()
    }

    /// Mean atom number, `tr rho_a`.
    pub fn atom_number(&self) -> f64 {
        self.rho_a.diag().iter().map(|v| v.re).sum()
    }

    /// Mean molecule number, `tr rho_m`.
    pub fn molecule_number(&self) -> f64 {
        self.rho_m.diag().iter().map(|v| v.re).sum()
    }

    /// Energy contracted from integrals and density matrices.
    pub fn energy(&self, t: &IntegralTables) -> f64 {
        let mut e = ZERO;
        e += t.h_a.iter().zip(self.rho_a.iter()).map(|(h, r)| h * r).sum::<Complex64>();
        e += t.h_m.iter().zip(self.rho_m.iter()).map(|(h, r)| h * r).sum::<Complex64>();
        let two_body = |w: &Array4<Complex64>, rho: &Array4<Complex64>| {
            let m = w.shape()[0];
            let mut acc = ZERO;
            for k in 0..m {
                for s in 0..m {
                    for q in 0..m {
                        for l in 0..m {
                            acc += w[[k, s, q, l]] * rho[[k, s, l, q]];
                        }
                    }
                }
            }
            0.5 * acc
        };
        e += two_body(&t.w_a, &self.rho_a2);
        e += two_body(&t.w_m, &self.rho_m2);
        e += t.w_am.iter().zip(self.rho_am.iter()).map(|(w, r)| w * r).sum::<Complex64>();
        let conv: Complex64 = t
            .w_conv
            .iter()
            .zip(self.rho_conv.iter())
            .map(|(w, r)| w * r)
            .sum();
        e.re + std::f64::consts::SQRT_2 * conv.re
    }

    /// JSON object keyed `rho_a`, `rho_m`, `rho_a2`, `rho_m2`, `rho_am`, `rho_conv`
    /// with nested arrays of `{"re", "im"}` entries.
    pub fn to_json(&self) -> Value {
        json!({
            "rho_a": nested(self.rho_a.view().into_dyn()),
            "rho_m": nested(self.rho_m.view().into_dyn()),
            "rho_a2": nested(self.rho_a2.view().into_dyn()),
            "rho_m2": nested(self.rho_m2.view().into_dyn()),
            "rho_am": nested(self.rho_am.view().into_dyn()),
            "rho_conv": nested(self.rho_conv.view().into_dyn()),
        })
    }
}

pub(crate) fn complex_json(c: Complex64) -> Value {
    json!({ "re": c.re, "im": c.im })
}

fn nested(a: ndarray::ArrayViewD<'_, Complex64>) -> Value {
    if a.ndim() == 0 {
        return complex_json(a[ndarray::IxDyn(&[])]);
    }
    Value::Array(
        a.outer_iter()
            .map(|sub| nested(sub.into_dyn()))
            .collect(),
    )
}

/// Accumulates `conj(C_bra) * amp * C_ket` for every term.
fn add_term(
    basis: &ConfigurationBasis,
    coeffs: &[Complex64],
    atoms: &[u32],
    mols: &[u32],
    amp: f64,
    cj: Complex64,
) -> Complex64 {
    match basis.index_of(&Configuration::new(atoms.to_vec(), mols.to_vec())) {
        Some(i) => coeffs[i].conj() * cj * amp,
        None => ZERO,
    }
}

/// Computes every reduced density matrix of `coeffs` in `basis`.
pub fn compute_rdms(basis: &ConfigurationBasis, coeffs: &[Complex64]) -> Result<RdmBundle> {
    check_len("coefficient vector", basis.len(), coeffs.len())?;
    let (m, mp) = (basis.n_atomic(), basis.n_molecular());
    let mut rho_a = Array2::zeros((m, m));
    let mut rho_m = Array2::zeros((mp, mp));
    let mut rho_a2 = Array4::zeros((m, m, m, m));
    let mut rho_m2 = Array4::zeros((mp, mp, mp, mp));
    let mut rho_am = Array4::zeros((m, mp, m, mp));
    let mut rho_conv = Array3::zeros((mp, m, m));

    for (j, ket) in basis.configs().iter().enumerate() {
        let cj = coeffs[j];
        if cj == ZERO {
            continue;
        }
        let (mut a, mut c) = (ket.atom_occ.clone(), ket.mol_occ.clone());

        for q in 0..m {
            let Some(aq) = lower(&mut a, q) else { continue };
            for k in 0..m {
                let ak = raise(&mut a, k);
                rho_a[[k, q]] += add_term(basis, coeffs, &a, &c, aq * ak, cj);
                a[k] -= 1;
            }
            for l in 0..m {
                let Some(al) = lower(&mut a, l) else { continue };
                for s in 0..m {
                    let as_ = raise(&mut a, s);
                    for k in 0..m {
                        let ak = raise(&mut a, k);
                        rho_a2[[k, s, l, q]] +=
                            add_term(basis, coeffs, &a, &c, aq * al * as_ * ak, cj);
                        a[k] -= 1;
                    }
                    a[s] -= 1;
                }
                a[l] += 1;
            }
            // Conversion: c+_k' b_k b_q with b_q already applied.
            for k in 0..m {
                let Some(ak) = lower(&mut a, k) else { continue };
                for kp in 0..mp {
                    let ck = raise(&mut c, kp);
                    rho_conv[[kp, k, q]] += add_term(basis, coeffs, &a, &c, aq * ak * ck, cj);
                    c[kp] -= 1;
                }
                a[k] += 1;
            }
            a[q] += 1;
        }

        for q in 0..mp {
            let Some(cq) = lower(&mut c, q) else { continue };
            for k in 0..mp {
                let ck = raise(&mut c, k);
                rho_m[[k, q]] += add_term(basis, coeffs, &a, &c, cq * ck, cj);
                c[k] -= 1;
            }
            for l in 0..mp {
                let Some(cl) = lower(&mut c, l) else { continue };
                for s in 0..mp {
                    let cs = raise(&mut c, s);
                    for k in 0..mp {
                        let ck = raise(&mut c, k);
                        rho_m2[[k, s, l, q]] +=
                            add_term(basis, coeffs, &a, &c, cq * cl * cs * ck, cj);
                        c[k] -= 1;
                    }
                    c[s] -= 1;
                }
                c[l] += 1;
            }
            c[q] += 1;
        }

        for qp in 0..mp {
            let Some(cq) = lower(&mut c, qp) else { continue };
            for kp in 0..mp {
                let ck = raise(&mut c, kp);
                for q in 0..m {
                    let Some(aq) = lower(&mut a, q) else { continue };
                    for k in 0..m {
                        let ak = raise(&mut a, k);
                        rho_am[[k, kp, q, qp]] +=
                            add_term(basis, coeffs, &a, &c, cq * ck * aq * ak, cj);
                        a[k] -= 1;
                    }
                    a[q] += 1;
                }
                c[kp] -= 1;
            }
            c[qp] += 1;
        }
    }

    Ok(RdmBundle {
        rho_a,
        rho_m,
        rho_a2,
        rho_m2,
        rho_am,
        rho_conv,
    })
}

fn to_dmatrix(rho: &Array2<Complex64>) -> DMatrix<Complex64> {
    let n = rho.nrows();
    DMatrix::from_fn(n, n, |i, j| rho[[i, j]])
}

fn hermitian_eigen(rho: &Array2<Complex64>) -> Result<nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn>> {
    if rho.nrows() != rho.ncols() {
        return Err(SolverError::Dimension {
            context: "density matrix",
            expected: rho.nrows(),
            actual: rho.ncols(),
        });
    }
    let mat = to_dmatrix(rho);
    let deviation = (&mat - mat.adjoint())
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if deviation > 1e-8 {
        return Err(SolverError::NonHermitian { deviation });
    }
    let sym = (&mat + mat.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(sym.symmetric_eigen())
}

/// Regularized inverse `U diag(1 / (l + eps exp(-l / eps))) U+` of a Hermitian
/// density matrix.
pub fn regularized_inverse(rho: &Array2<Complex64>, eps: f64) -> Result<Array2<Complex64>> {
    if !(eps > 0.0) {
        return Err(SolverError::Precondition(format!(
            "regularization must be positive, got {eps}"
        )));
    }
    let eig = hermitian_eigen(rho)?;
    let n = rho.nrows();
    let u = &eig.eigenvectors;
    let inv: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (l + eps * (-l / eps).exp()))
        .collect();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        (0..n).map(|a| u[(i, a)] * inv[a] * u[(j, a)].conj()).sum()
    }))
}

/// Eigenvalues of a Hermitian one-body density matrix, largest first.
pub fn natural_occupations(rho: &Array2<Complex64>) -> Result<Vec<f64>> {
    let eig = hermitian_eigen(rho)?;
    let mut occ: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    occ.sort_by(|a, b| b.total_cmp(a));
    Ok(occ)
}

/// Real-space density `n(x) = sum_kq rho_kq conj(f_k(x)) f_q(x)`.
pub fn density(grid: &SpatialGrid, rho: &Array2<Complex64>, orbitals: &[GridFn]) -> Result<Vec<f64>> {
    check_len("density orbitals", rho.nrows(), orbitals.len())?;
    let mut out = vec![0.0; grid.n_points()];
    for (k, fk) in orbitals.iter().enumerate() {
        check_len("density orbital samples", grid.n_points(), fk.len())?;
        for (q, fq) in orbitals.iter().enumerate() {
            let r = rho[[k, q]];
            for (o, (a, b)) in out.iter_mut().zip(fk.iter().zip(fq)) {
                *o += (r * a.conj() * b).re;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_configuration_occupations() {
        let basis = ConfigurationBasis::enumerate(4, 2, 1).unwrap();
        let idx = basis
            .index_of(&Configuration::new(vec![2, 0], vec![1]))
            .unwrap();
        let mut coeffs = vec![ZERO; basis.len()];
        coeffs[idx] = c(0.0, 1.0);
        let r = compute_rdms(&basis, &coeffs).unwrap();
        assert!((r.rho_a[[0, 0]] - c(2.0, 0.0)).norm() < 1e-14);
        assert_eq!(r.rho_a[[1, 1]], ZERO);
        assert!((r.rho_m[[0, 0]] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r.rho_a2[[0, 0, 0, 0]] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((r.rho_am[[0, 0, 0, 0]] - c(2.0, 0.0)).norm() < 1e-14);
        assert!(r.rho_conv.iter().all(|v| *v == ZERO));
        assert!((r.atom_number() + 2.0 * r.molecule_number() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn conversion_coherence_two_mode() {
        // (|2,0> + |0,1>) / sqrt2: <c+ b b> = sqrt2 * 1/2.
        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = compute_rdms(&basis, &[c(s, 0.0), c(s, 0.0)]).unwrap();
        assert!((r.rho_conv[[0, 0, 0]] - c(s, 0.0)).norm() < 1e-15);
        assert!((r.rho_dissociation(0, 0, 0) - c(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn regularized_inverse_behaviour() {
        let rho = Array2::from_shape_vec((2, 2), vec![c(2.0, 0.0), ZERO, ZERO, c(0.5, 0.0)]).unwrap();
        let inv = regularized_inverse(&rho, 1e-8).unwrap();
        assert!((inv[[0, 0]] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((inv[[1, 1]] - c(2.0, 0.0)).norm() < 1e-12);

        let singular = Array2::from_shape_vec((2, 2), vec![c(1.0, 0.0), ZERO, ZERO, ZERO]).unwrap();
        let inv = regularized_inverse(&singular, 1e-8).unwrap();
        assert!((inv[[1, 1]].re - 1e8).abs() < 1.0);

        let bad = Array2::from_shape_vec((2, 2), vec![c(1.0, 0.0), c(1.0, 0.0), ZERO, ZERO]).unwrap();
        assert!(matches!(
            regularized_inverse(&bad, 1e-8),
            Err(SolverError::NonHermitian { .. })
        ));
        assert!(regularized_inverse(&rho, 0.0).is_err());
    }

    #[test]
    fn occupations_sorted() {
        let rho = Array2::from_shape_vec((2, 2), vec![c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(1.0, 0.0)])
            .unwrap();
        let occ = natural_occupations(&rho).unwrap();
        assert!((occ[0] - 1.5).abs() < 1e-14 && (occ[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn json_layout() {
        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        let r = compute_rdms(&basis, &[c(1.0, 0.0), ZERO]).unwrap();
        let v = r.to_json();
        assert!((v["rho_a"][0][0]["re"].as_f64().unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(v["rho_conv"][0][0][0]["im"], 0.0);
    }
}
