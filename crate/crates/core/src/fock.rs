//! Configuration basis `|n^p, m^p>` for `N - 2p` atoms in `M` orbitals and
//! `p` molecules in `M'` orbitals, with bosonic ladder actions.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Result, SolverError};

/// Largest basis the enumerator will build.
pub const MAX_BASIS_SIZE: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    Atom,
    Molecule,
}

impl Species {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Species::Atom => "atomic",
            Species::Molecule => "molecular",
        }
    }
}

/// Occupation numbers of one configuration. The molecule count `p` is the
/// sum of the molecular occupations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub atom_occ: Vec<u32>,
    pub mol_occ: Vec<u32>,
}

impl Configuration {
    pub fn new(atom_occ: Vec<u32>, mol_occ: Vec<u32>) -> Self {
        Self { atom_occ, mol_occ }
    }

    /// All-zero configuration.
    pub fn vacuum(n_atomic: usize, n_molecular: usize) -> Self {
        Self::new(vec![0; n_atomic], vec![0; n_molecular])
    }

    pub fn p(&self) -> u32 {
        self.mol_occ.iter().sum()
    }

    pub fn n_atoms(&self) -> u32 {
        self.atom_occ.iter().sum()
    }

    /// `N_a + 2 N_m` for this configuration.
    pub fn total_particles(&self) -> u32 {
        self.n_atoms() + 2 * self.p()
    }

    fn occ(&self, species: Species) -> &[u32] {
        match species {
            Species::Atom => &self.atom_occ,
            Species::Molecule => &self.mol_occ,
        }
    }

    fn occ_mut(&mut self, species: Species) -> &mut [u32] {
        match species {
            Species::Atom => &mut self.atom_occ,
            Species::Molecule => &mut self.mol_occ,
        }
    }

    fn check_index(&self, species: Species, index: usize) -> Result<()> {
        let count = self.occ(species).len();
        if index < count {
            Ok(())
        } else {
            Err(SolverError::IndexOutOfRange {
                species: species.name(),
                index,
                count,
            })
        }
    }

    /// `b_k` or `c_k'` acting on this configuration (0-based orbital index).
    pub fn apply_annihilator(&self, species: Species, index: usize) -> Result<LadderResult> {
        self.check_index(species, index)?;
        let n = self.occ(species)[index];
        if n == 0 {
            return Ok(LadderResult::Annihilated);
        }
        let mut target = self.clone();
        target.occ_mut(species)[index] -= 1;
        Ok(LadderResult::State {
            target,
            amplitude: f64::from(n).sqrt(),
        })
    }

    /// `b_k^dag` or `c_k'^dag` acting on this configuration (0-based orbital index).
    pub fn apply_creator(&self, species: Species, index: usize) -> Result<LadderResult> {
        self.check_index(species, index)?;
        let mut target = self.clone();
        let slot = &mut target.occ_mut(species)[index];
        *slot += 1;
        let amplitude = f64::from(*slot).sqrt();
        Ok(LadderResult::State { target, amplitude })
    }
}

/// In-place annihilator on a bare occupation vector: returns `sqrt(n_k)` and
/// decrements, or `None` when the mode is empty.
#[inline]
pub(crate) fn lower(occ: &mut [u32], k: usize) -> Option<f64> {
    let n = occ[k];
    if n == 0 {
        None
    } else {
        occ[k] = n - 1;
        Some(f64::from(n).sqrt())
    }
}

/// In-place creator on a bare occupation vector: increments and returns `sqrt(n_k + 1)`.
#[inline]
pub(crate) fn raise(occ: &mut [u32], k: usize) -> f64 {
    occ[k] += 1;
    f64::from(occ[k]).sqrt()
}

/// Outcome of a single ladder operator.
#[derive(Debug, Clone, PartialEq)]
pub enum LadderResult {
    Annihilated,
    State { target: Configuration, amplitude: f64 },
}

impl LadderResult {
    pub fn amplitude(&self) -> f64 {
        match self {
            LadderResult::Annihilated => 0.0,
            LadderResult::State { amplitude, .. } => *amplitude,
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Closed-form basis size `sum_p C(N-2p+M-1, M-1) C(p+M'-1, M'-1)`.
pub fn basis_size(n_particles: u32, n_atomic: usize, n_molecular: usize) -> u128 {
    let (m, mp) = (n_atomic as u128, n_molecular as u128);
    (0..=n_particles / 2)
        .map(|p| {
            let atoms = u128::from(n_particles - 2 * p);
            binomial(atoms + m - 1, m - 1) * binomial(u128::from(p) + mp - 1, mp - 1)
        })
        .sum()
}

/// All occupation vectors of `total` bosons in `slots` modes, ascending lexicographic.
fn compositions(total: u32, slots: usize) -> Vec<Vec<u32>> {
    fn rec(total: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, slots, &mut Vec::with_capacity(slots), &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct ConfigurationBasis {
    n_particles: u32,
    n_atomic: usize,
    n_molecular: usize,
    configs: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    // Start offset of each p sector in `configs`, plus a final sentinel.
    sector_start: Vec<usize>,
}

impl ConfigurationBasis {
    /// Enumerates every configuration with `|n| + 2|m| = N`, ordered by
    /// ascending `p` and then lexicographically in `(atom_occ, mol_occ)`.
    pub fn enumerate(n_particles: u32, n_atomic: usize, n_molecular: usize) -> Result<Self> {
        if n_atomic == 0 || n_molecular == 0 {
            return Err(SolverError::Precondition(
                "need at least one atomic and one molecular orbital".into(),
            ));
        }
        let size = basis_size(n_particles, n_atomic, n_molecular);
        if size > MAX_BASIS_SIZE as u128 {
            return Err(SolverError::BasisTooLarge {
                size,
                limit: MAX_BASIS_SIZE,
            });
        }
        let mut configs = Vec::with_capacity(size as usize);
        let mut sector_start = Vec::new();
        for p in 0..=n_particles / 2 {
            sector_start.push(configs.len());
            let atom_sets = compositions(n_particles - 2 * p, n_atomic);
            let mol_sets = compositions(p, n_molecular);
            for a in &atom_sets {
                for m in &mol_sets {
                    configs.push(Configuration::new(a.clone(), m.clone()));
                }
            }
        }
        sector_start.push(configs.len());
        debug_assert_eq!(configs.len() as u128, size);
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(Self {
            n_particles,
            n_atomic,
            n_molecular,
            configs,
            index,
            sector_start,
        })
    }

    pub fn n_particles(&self) -> u32 {
        self.n_particles
    }

    pub fn n_atomic(&self) -> usize {
        self.n_atomic
    }

    pub fn n_molecular(&self) -> usize {
        self.n_molecular
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn config(&self, i: usize) -> &Configuration {
        &self.configs[i]
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn max_molecules(&self) -> u32 {
        self.n_particles / 2
    }

    /// Index range of configurations with exactly `p` molecules.
    pub fn sector(&self, p: u32) -> std::ops::Range<usize> {
        let p = p as usize;
        self.sector_start[p]..self.sector_start[p + 1]
    }

    /// The all-atom configuration with every atom in orbital 0.
    pub fn all_atoms_ground(&self) -> Configuration {
        let mut c = Configuration::vacuum(self.n_atomic, self.n_molecular);
        c.atom_occ[0] = self.n_particles;
        c
    }

    /// Text dump, one line per configuration: `p | n1 .. nM | m1 .. mM'`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.configs {
            let join = |v: &[u32]| {
                v.iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(out, "{} | {} | {}", c.p(), join(&c.atom_occ), join(&c.mol_occ));
        }
        out
    }
}
