#![allow(dead_code)]

use mctdh_conv::eom::OrbitalSet;
use mctdh_conv::fock::ConfigurationBasis;
use mctdh_conv::grid::{harmonic_eigenfunction, GridFn, OneBodyOperatorSpec, PotentialSpec, SpatialGrid};
use mctdh_conv::hamiltonian::{Couplings, InteractionSpec};
use mctdh_conv::propagation::System;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MASS_ATOM: f64 = 1.0;
pub const MASS_MOLECULE: f64 = 2.0;

pub fn trap_specs(grid: &SpatialGrid, omega: f64) -> (OneBodyOperatorSpec, OneBodyOperatorSpec) {
    let va = PotentialSpec::Harmonic(omega).sample(grid, MASS_ATOM).unwrap();
    let vm = PotentialSpec::Harmonic(omega).sample(grid, MASS_MOLECULE).unwrap();
    (
        OneBodyOperatorSpec::new(grid, MASS_ATOM, va, 0.0).unwrap(),
        OneBodyOperatorSpec::new(grid, MASS_MOLECULE, vm, 0.0).unwrap(),
    )
}

pub fn trapped_system(
    grid: SpatialGrid,
    n: u32,
    m: usize,
    mp: usize,
    interaction: InteractionSpec,
) -> System {
    let (atom, mol) = trap_specs(&grid, 1.0);
    let basis = ConfigurationBasis::enumerate(n, m, mp).unwrap();
    System::new(grid, atom, mol, interaction, basis, 1e-8).unwrap()
}

pub fn gaussian_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(r * t.cos(), r * t.sin())
}

pub fn random_coefficients(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = (0..dim).map(|_| gaussian_complex(rng)).collect();
    let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= norm);
    c
}

/// Smooth complex function: random combination of the lowest trap states
/// with a random linear phase.
pub fn random_smooth(rng: &mut ChaCha8Rng, grid: &SpatialGrid, mass: f64) -> GridFn {
    let mut f = grid.zeros();
    for n in 0..6 {
        let a = gaussian_complex(rng) / (1.0 + n as f64);
        let h = harmonic_eigenfunction(grid, mass, 1.0, n);
        for (o, v) in f.iter_mut().zip(&h) {
            *o += a * v;
        }
    }
    let kick: f64 = rng.gen_range(-0.5..0.5);
    for (o, &x) in f.iter_mut().zip(grid.points()) {
        *o *= Complex64::from_polar(1.0, kick * x);
    }
    f
}

pub fn random_orbitals(rng: &mut ChaCha8Rng, grid: &SpatialGrid, m: usize, mp: usize) -> OrbitalSet {
    let raw = OrbitalSet {
        atomic: (0..m).map(|_| random_smooth(rng, grid, MASS_ATOM)).collect(),
        molecular: (0..mp).map(|_| random_smooth(rng, grid, MASS_MOLECULE)).collect(),
    };
    raw.orthonormalized(grid).unwrap()
}

pub fn random_couplings(rng: &mut ChaCha8Rng) -> Couplings {
    Couplings {
        lambda_a: rng.gen_range(-0.5..0.5),
        lambda_m: rng.gen_range(-0.5..0.5),
        lambda_am: rng.gen_range(-0.5..0.5),
        lambda_con: rng.gen_range(-0.5..0.5),
    }
}

pub fn max_abs_diff<'a, I>(a: I, b: I) -> f64
where
    I: IntoIterator<Item = &'a Complex64>,
{
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_real_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn orbital_set_diff(a: &OrbitalSet, b: &OrbitalSet) -> f64 {
    let mut d: f64 = 0.0;
    for (x, y) in a.atomic.iter().zip(&b.atomic).chain(a.molecular.iter().zip(&b.molecular)) {
        d = d.max(max_abs_diff(x, y));
    }
    d
}
