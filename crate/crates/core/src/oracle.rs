//! Brute-force dense reference built by composing single ladder operators on
//! every basis configuration. Meant for validation on small bases only.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;

use crate::error::{check_len, Result, SolverError};
use crate::fock::{ConfigurationBasis, LadderResult, Species};
use crate::hamiltonian::IntegralTables;
use crate::rdm::RdmBundle;

/// Largest basis the dense oracle accepts.
pub const MAX_DENSE_SIZE: usize = 4000;

/// One creation or annihilation operator, 0-based orbital index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ladder {
    pub species: Species,
    pub create: bool,
    pub index: usize,
}

impl Ladder {
    pub fn b(index: usize) -> Self {
        Self {
            species: Species::Atom,
            create: false,
            index,
        }
    }

    pub fn b_dag(index: usize) -> Self {
        Self {
            species: Species::Atom,
            create: true,
            index,
        }
    }

    pub fn c(index: usize) -> Self {
        Self {
            species: Species::Molecule,
            create: false,
            index,
        }
    }

    pub fn c_dag(index: usize) -> Self {
        Self {
            species: Species::Molecule,
            create: true,
            index,
        }
    }

    /// Change of `N_a + 2 N_m` caused by this operator.
    fn charge(&self) -> i64 {
        let unit = match self.species {
            Species::Atom => 1,
            Species::Molecule => 2,
        };
        if self.create {
            unit
        } else {
            -unit
        }
    }
}

/// Dense complex matrix over a configuration basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    /// `self += coeff * other`.
    pub fn add_scaled(&mut self, coeff: Complex64, other: &DenseOperator) {
        self.matrix += &other.matrix * coeff;
    }

    pub fn product(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn adjoint(&self) -> DenseOperator {
        DenseOperator {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("dense apply", self.dim(), x.len())?;
        let v = &self.matrix * DVector::from_column_slice(x);
        Ok(v.iter().copied().collect())
    }

    /// `<x|A|x>`.
    pub fn expectation(&self, x: &[Complex64]) -> Result<Complex64> {
        let ax = self.apply(x)?;
        Ok(x.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum())
    }

    fn hermitian_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    fn check_hermitian(&self) -> Result<()> {
        let scale = self.matrix.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let deviation = self.hermitian_deviation();
        if deviation > 1e-10 * scale {
            return Err(SolverError::NonHermitian { deviation });
        }
        Ok(())
    }

    fn symmetrized_eigen(&self) -> nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigen()
    }
}

fn check_dense_size(basis: &ConfigurationBasis) -> Result<()> {
    if basis.len() > MAX_DENSE_SIZE {
        return Err(SolverError::Precondition(format!(
            "dense oracle limited to {MAX_DENSE_SIZE} configurations, basis has {}",
            basis.len()
        )));
    }
    Ok(())
}

/// Matrix of the operator product `ops[0] ops[1] ... ops[n-1]`; the rightmost
/// operator acts first. The product must conserve `N_a + 2 N_m`.
pub fn ladder_product(basis: &ConfigurationBasis, ops: &[Ladder]) -> Result<DenseOperator> {
    check_dense_size(basis)?;
    let charge: i64 = ops.iter().map(Ladder::charge).sum();
    if charge != 0 {
        return Err(SolverError::Precondition(
            "operator product does not conserve N_a + 2 N_m".into(),
        ));
    }
    for op in ops {
        let count = match op.species {
            Species::Atom => basis.n_atomic(),
            Species::Molecule => basis.n_molecular(),
        };
        if op.index >= count {
            return Err(SolverError::IndexOutOfRange {
                species: op.species.name(),
                index: op.index,
                count,
            });
        }
    }
    let mut out = DenseOperator::zeros(basis.len());
    for (j, ket) in basis.configs().iter().enumerate() {
        let mut state = ket.clone();
        let mut amp = 1.0;
        let mut alive = true;
        for op in ops.iter().rev() {
            let r = if op.create {
                state.apply_creator(op.species, op.index)?
            } else {
                state.apply_annihilator(op.species, op.index)?
            };
            match r {
                LadderResult::Annihilated => {
                    alive = false;
                    break;
                }
                LadderResult::State { target, amplitude } => {
                    state = target;
                    amp *= amplitude;
                }
            }
        }
        if alive {
            let i = basis
                .index_of(&state)
                .expect("number-conserving product stays in the basis");
            out.matrix[(i, j)] += Complex64::new(amp, 0.0);
        }
    }
    Ok(out)
}

fn parse_ladder(token: &str) -> Result<Ladder> {
    let bad = || SolverError::MalformedExpression(token.to_string());
    let mut chars = token.chars();
    let species = match chars.next() {
        Some('b') => Species::Atom,
        Some('c') => Species::Molecule,
        _ => return Err(bad()),
    };
    let mut rest: &str = chars.as_str();
    let mut create = false;
    for dagger in ["+", "†", "^+", "^†", "dag"] {
        if let Some(r) = rest.strip_prefix(dagger) {
            create = true;
            rest = r;
            break;
        }
    }
    let rest = rest.strip_prefix('_').unwrap_or(rest);
    let rest = rest
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .unwrap_or(rest);
    let index: usize = rest.parse().map_err(|_| bad())?;
    if index == 0 {
        return Err(bad());
    }
    Ok(Ladder {
        species,
        create,
        index: index - 1,
    })
}

/// Parses and builds a sum of ladder products such as
/// `"c+1 b1 b2"` or `"b+1 b1 + b+2 b2"` or `"0.5 b+1 b+1 b1 b1"`.
///
/// Tokens are `b<k>`, `b+<k>`, `c<k>`, `c+<k>` with 1-based orbital index
/// (`†`, `_` and braces are also accepted, e.g. `c†_{1}`). Terms are separated
/// by a standalone `+` or `-`; an optional leading number scales a term.
pub fn build_operator(basis: &ConfigurationBasis, expression: &str) -> Result<DenseOperator> {
    let tokens: Vec<&str> = expression
        .split(|ch: char| ch.is_whitespace() || ch == '*')
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(SolverError::MalformedExpression(expression.to_string()));
    }
    let mut total = DenseOperator::zeros(basis.len());
    let mut sign = 1.0;
    let mut coeff: Option<f64> = None;
    let mut ops: Vec<Ladder> = Vec::new();
    let mut flush = |sign: f64, coeff: Option<f64>, ops: &mut Vec<Ladder>| -> Result<()> {
        if ops.is_empty() && coeff.is_none() {
            return Err(SolverError::MalformedExpression(expression.to_string()));
        }
        let term = ladder_product(basis, ops)?;
        total.add_scaled(Complex64::new(sign * coeff.unwrap_or(1.0), 0.0), &term);
        ops.clear();
        Ok(())
    };
    for tok in tokens {
        match tok {
            "+" | "-" => {
                flush(sign, coeff, &mut ops)?;
                sign = if tok == "-" { -1.0 } else { 1.0 };
                coeff = None;
            }
            _ => {
                if ops.is_empty() && coeff.is_none() {
                    if let Ok(v) = tok.parse::<f64>() {
                        coeff = Some(v);
                        continue;
                    }
                }
                ops.push(parse_ladder(tok)?);
            }
        }
    }
    flush(sign, coeff, &mut ops)?;
    Ok(total)
}

/// Full Hamiltonian as a sum of dense ladder products weighted by integrals.
pub fn dense_hamiltonian(basis: &ConfigurationBasis, t: &IntegralTables) -> Result<DenseOperator> {
    check_len("atomic integral tables", basis.n_atomic(), t.n_atomic())?;
    check_len("molecular integral tables", basis.n_molecular(), t.n_molecular())?;
    let (m, mp) = (basis.n_atomic(), basis.n_molecular());
    let mut h = DenseOperator::zeros(basis.len());
    let half = Complex64::new(0.5, 0.0);
    use Ladder as L;
    for k in 0..m {
        for q in 0..m {
            h.add_scaled(t.h_a[[k, q]], &ladder_product(basis, &[L::b_dag(k), L::b(q)])?);
            for s in 0..m {
                for l in 0..m {
                    let op = ladder_product(basis, &[L::b_dag(k), L::b_dag(s), L::b(l), L::b(q)])?;
                    h.add_scaled(half * t.w_a[[k, s, q, l]], &op);
                }
            }
        }
    }
    for k in 0..mp {
        for q in 0..mp {
            h.add_scaled(t.h_m[[k, q]], &ladder_product(basis, &[L::c_dag(k), L::c(q)])?);
            for s in 0..mp {
                for l in 0..mp {
                    let op = ladder_product(basis, &[L::c_dag(k), L::c_dag(s), L::c(l), L::c(q)])?;
                    h.add_scaled(half * t.w_m[[k, s, q, l]], &op);
                }
            }
        }
    }
    for k in 0..m {
        for kp in 0..mp {
            for q in 0..m {
                for qp in 0..mp {
                    let op = ladder_product(basis, &[L::b_dag(k), L::b(q), L::c_dag(kp), L::c(qp)])?;
                    h.add_scaled(t.w_am[[k, kp, q, qp]], &op);
                }
            }
        }
    }
    let frac = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for kp in 0..mp {
        for k in 0..m {
            for q in 0..m {
                let fwd = ladder_product(basis, &[L::c_dag(kp), L::b(k), L::b(q)])?;
                let w = t.w_conv[[kp, k, q]];
                h.add_scaled(frac * w, &fwd);
                h.add_scaled(frac * w.conj(), &fwd.adjoint());
            }
        }
    }
    Ok(h)
}

/// Every density-matrix tensor as a dense expectation value.
pub fn dense_rdms(basis: &ConfigurationBasis, coeffs: &[Complex64]) -> Result<RdmBundle> {
    check_len("coefficient vector", basis.len(), coeffs.len())?;
    let (m, mp) = (basis.n_atomic(), basis.n_molecular());
    use Ladder as L;
    let ev = |ops: &[Ladder]| -> Result<Complex64> { ladder_product(basis, ops)?.expectation(coeffs) };
    let mut rho_a = Array2::zeros((m, m));
    let mut rho_m = Array2::zeros((mp, mp));
    let mut rho_a2 = Array4::zeros((m, m, m, m));
    let mut rho_m2 = Array4::zeros((mp, mp, mp, mp));
    let mut rho_am = Array4::zeros((m, mp, m, mp));
    let mut rho_conv = Array3::zeros((mp, m, m));
    for k in 0..m {
        for q in 0..m {
            rho_a[[k, q]] = ev(&[L::b_dag(k), L::b(q)])?;
            for s in 0..m {
                for l in 0..m {
                    rho_a2[[k, s, l, q]] = ev(&[L::b_dag(k), L::b_dag(s), L::b(l), L::b(q)])?;
                }
            }
        }
    }
    for k in 0..mp {
        for q in 0..mp {
            rho_m[[k, q]] = ev(&[L::c_dag(k), L::c(q)])?;
            for s in 0..mp {
                for l in 0..mp {
                    rho_m2[[k, s, l, q]] = ev(&[L::c_dag(k), L::c_dag(s), L::c(l), L::c(q)])?;
                }
            }
        }
    }
    for k in 0..m {
        for kp in 0..mp {
            for q in 0..m {
                for qp in 0..mp {
                    rho_am[[k, kp, q, qp]] = ev(&[L::b_dag(k), L::b(q), L::c_dag(kp), L::c(qp)])?;
                }
            }
            for q in 0..m {
                rho_conv[[kp, k, q]] = ev(&[L::c_dag(kp), L::b(k), L::b(q)])?;
            }
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

/// `C(t) = U exp(-i lambda t) U+ C0` from a full eigendecomposition.
pub fn exact_evolve(h: &DenseOperator, c0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    check_len("initial coefficients", h.dim(), c0.len())?;
    h.check_hermitian()?;
    let eig = h.symmetrized_eigen();
    let u = &eig.eigenvectors;
    let x = DVector::from_column_slice(c0);
    let mut y = u.adjoint() * x;
    for (v, &l) in y.iter_mut().zip(eig.eigenvalues.iter()) {
        *v *= Complex64::from_polar(1.0, -l * t);
    }
    Ok((u * y).iter().copied().collect())
}

/// Lowest eigenvalue and its normalized eigenvector.
pub fn exact_ground_state(h: &DenseOperator) -> Result<(f64, Vec<Complex64>)> {
    if h.dim() == 0 {
        return Err(SolverError::Precondition("empty operator".into()));
    }
    h.check_hermitian()?;
    let eig = h.symmetrized_eigen();
    let (idx, &e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let v: Vec<Complex64> = eig.eigenvectors.column(idx).iter().copied().collect();
    Ok((e0, v))
}

/// Largest entrywise difference between a dense operator and a matrix.
pub fn max_difference(a: &DenseOperator, b: &Array2<Complex64>) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            d = d.max((a.get(i, j) - b[[i, j]]).norm());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Configuration;

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    #[test]
    fn atom_number_is_diagonal() {
        let basis = ConfigurationBasis::enumerate(5, 2, 1).unwrap();
        let n_a = build_operator(&basis, "b+1 b1 + b+2 b2").unwrap();
        for (i, c) in basis.configs().iter().enumerate() {
            for j in 0..basis.len() {
                let expect = if i == j { f64::from(5 - 2 * c.p()) } else { 0.0 };
                assert!((n_a.get(i, j).re - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pair_to_molecule_amplitude() {
        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        let op = build_operator(&basis, "c†_1 b_1 b_1").unwrap();
        let row = basis.index_of(&Configuration::new(vec![0], vec![1])).unwrap();
        let col = basis.index_of(&Configuration::new(vec![2], vec![0])).unwrap();
        assert!((op.get(row, col).re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = op.matrix.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn canonical_commutator() {
        let basis = ConfigurationBasis::enumerate(4, 2, 2).unwrap();
        for k in 1..=2 {
            let comm = build_operator(&basis, &format!("b{k} b+{k} - b+{k} b{k}")).unwrap();
            let diff = &comm.matrix - DMatrix::<Complex64>::identity(basis.len(), basis.len());
            assert!(diff.iter().all(|v| v.norm() < 1e-14));
            let comm = build_operator(&basis, &format!("c{k} c+{k} - c+{k} c{k}")).unwrap();
            let diff = &comm.matrix - DMatrix::<Complex64>::identity(basis.len(), basis.len());
            assert!(diff.iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn malformed_expressions() {
        let basis = ConfigurationBasis::enumerate(2, 1, 1).unwrap();
        for bad in ["", "x1", "b0", "b+", "c1 b1", "b3 b+1", "b+1 b1 +"] {
            assert!(build_operator(&basis, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn evolution_and_ground_state() {
        let h = DenseOperator {
            matrix: DMatrix::from_diagonal(&DVector::from_vec(vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(-0.5, 0.0),
                Complex64::new(2.0, 0.0),
            ])),
        };
        let c0 = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), ZERO];
        assert_eq!(exact_evolve(&h, &c0, 0.0).unwrap().len(), 3);
        let ct = exact_evolve(&h, &c0, 1.3).unwrap();
        for (i, d) in [1.0, -0.5, 2.0].iter().enumerate() {
            let expect = c0[i] * Complex64::from_polar(1.0, -d * 1.3);
            assert!((ct[i] - expect).norm() < 1e-14);
        }
        let (e0, v) = exact_ground_state(&h).unwrap();
        assert!((e0 + 0.5).abs() < 1e-14);
        assert!((v[1].norm() - 1.0).abs() < 1e-14);

        let mut bad = h.clone();
        bad.matrix[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(exact_ground_state(&bad), Err(SolverError::NonHermitian { .. })));
    }

    #[test]
    fn conversion_couples_neighbouring_sectors_only() {
        let basis = ConfigurationBasis::enumerate(6, 2, 2).unwrap();
        let op = build_operator(&basis, "c+1 b1 b2 + c+2 b2 b2").unwrap();
        for (i, ci) in basis.configs().iter().enumerate() {
            for (j, cj) in basis.configs().iter().enumerate() {
                if op.get(i, j).norm() > 0.0 {
                    assert_eq!(ci.p(), cj.p() + 1);
                }
            }
        }
    }
}
