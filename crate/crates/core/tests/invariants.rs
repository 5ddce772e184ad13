mod common;

use common::*;
use mctdh_conv::eom::{build_local_potentials, orbital_rhs};
use mctdh_conv::fock::ConfigurationBasis;
use mctdh_conv::grid::SpatialGrid;
use mctdh_conv::hamiltonian::{assemble_hamiltonian, compute_integrals, InteractionSpec};
use mctdh_conv::rdm::compute_rdms;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid() -> SpatialGrid {
    SpatialGrid::new(48, 12.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn number_identity_holds(seed in any::<u64>(), n in 1u32..7, m in 1usize..4, mp in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = ConfigurationBasis::enumerate(n, m, mp).unwrap();
        let c = random_coefficients(&mut rng, basis.len());
        let rdms = compute_rdms(&basis, &c).unwrap();
        let total = rdms.atom_number() + 2.0 * rdms.molecule_number();
        prop_assert!((total - f64::from(n)).abs() < 1e-12);
        for rho in [&rdms.rho_a, &rdms.rho_m] {
            for ((i, j), v) in rho.indexed_iter() {
                prop_assert!((v - rho[[j, i]].conj()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_and_matches_rdm_energy(seed in any::<u64>(), n in 2u32..6, m in 1usize..3, mp in 1usize..3) {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (atom, mol) = trap_specs(&g, 1.0);
        let interaction = InteractionSpec::Contact(random_couplings(&mut rng));
        let orbitals = random_orbitals(&mut rng, &g, m, mp);
        let tables = compute_integrals(&g, &orbitals, &atom, &mol, &interaction).unwrap();
        let basis = ConfigurationBasis::enumerate(n, m, mp).unwrap();
        let h = assemble_hamiltonian(&basis, &tables).unwrap();
        let dense = h.to_dense();
        for ((i, j), v) in dense.indexed_iter() {
            prop_assert!((v - dense[[j, i]].conj()).norm() < 1e-13);
        }
        let c = random_coefficients(&mut rng, basis.len());
        let e_direct = h.expectation(&c).unwrap();
        let e_rdm = compute_rdms(&basis, &c).unwrap().energy(&tables);
        prop_assert!((e_direct - e_rdm).abs() < 1e-11, "{} vs {}", e_direct, e_rdm);
    }

    #[test]
    fn orbital_derivatives_are_tangent(seed in any::<u64>(), n in 2u32..5, m in 1usize..3, mp in 1usize..3) {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (atom, mol) = trap_specs(&g, 1.0);
        let interaction = InteractionSpec::Contact(random_couplings(&mut rng));
        let orbitals = random_orbitals(&mut rng, &g, m, mp);
        let basis = ConfigurationBasis::enumerate(n, m, mp).unwrap();
        let c = random_coefficients(&mut rng, basis.len());
        let rdms = compute_rdms(&basis, &c).unwrap();
        let ws = build_local_potentials(&g, &orbitals, &interaction).unwrap();
        let d = orbital_rhs(&g, &orbitals, &rdms, &ws, &atom, &mol, 1e-8).unwrap();
        for (set, deriv) in [(&orbitals.atomic, &d.atomic), (&orbitals.molecular, &d.molecular)] {
            for f in set {
                for df in deriv {
                    let ip = g.inner(f, df).unwrap();
                    prop_assert!(ip.norm() < 1e-9 * (1.0 + g.norm(df)), "overlap {}", ip);
                }
            }
        }
    }
}
