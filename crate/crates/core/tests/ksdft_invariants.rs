use ksfem_core::analysis::{procrustes_align, tangent_split};
use ksfem_core::ksdft::{initial_orbitals, scf_solve_from, InitialGuess, KsProblem, OrbitalSet, ScfConfig};
use ksfem_core::physics::{diatomic, free_box, tetrahedral};
use ksfem_core::sparse::apply_block;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn problem(which: usize, cells: usize) -> KsProblem {
    let sys = [diatomic(), tetrahedral(), free_box()][which].clone();
    KsProblem::uniform(sys, cells, 1).unwrap()
}

fn m_distance(p: &KsProblem, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a - b;
    (d.transpose() * apply_block(&p.mass, &d)).trace().max(0.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn energy_and_density_are_rotation_invariant(which in 0usize..2, seed in any::<u64>()) {
        let p = problem(which, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let phi = initial_orbitals(&p, InitialGuess::Random { seed }, p.n_orbitals()).unwrap();
        let u = random_orthogonal(p.n_orbitals(), &mut rng);
        let rotated = phi.rotate(&u);
        let (e0, e1) = (p.energy(&phi).unwrap(), p.energy(&rotated).unwrap());
        prop_assert!((e0 - e1).abs() <= 1e-11 * e0.abs().max(1.0), "{} {}", e0, e1);
        let (r0, r1) = (p.density(&phi), p.density(&rotated));
        let scale = r0.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r0.values.iter().zip(&r1.values).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
        // Λ transforms by congruence
        let l0 = p.lagrange_multipliers(&phi).unwrap();
        let l1 = p.lagrange_multipliers(&rotated).unwrap();
        let expect = u.transpose() * &l0 * &u;
        prop_assert!((l1 - expect).amax() <= 1e-10 * l0.amax().max(1.0));
    }

    #[test]
    fn multiplier_trace_identity(which in 0usize..2, seed in any::<u64>()) {
        // tr Λ = T + E_loc + E_nl + 2 E_H + ∫ E'(ρ) ρ
        let p = problem(which, 4);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed }, p.n_orbitals()).unwrap();
        let terms = p.energy_terms(&phi).unwrap();
        prop_assert!((terms.total - (terms.kinetic + terms.local + terms.nonlocal + terms.hartree + terms.xc)).abs() <= 1e-12 * terms.total.abs().max(1.0));
        let rho = p.density(&phi);
        let f = p.system.xc;
        let xc_moment: f64 = p
            .weights()
            .iter()
            .zip(&rho.values)
            .map(|(w, &t)| w * t * f.potential(t.max(0.0)).unwrap())
            .sum();
        let lhs = p.lagrange_multipliers(&phi).unwrap().trace();
        let rhs = terms.kinetic + terms.local + terms.nonlocal + 2.0 * terms.hartree + xc_moment;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn procrustes_is_optimal(seed in any::<u64>(), eps in 1e-3f64..0.5) {
        let p = problem(0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let phi = initial_orbitals(&p, InitialGuess::Random { seed }, 2).unwrap();
        let noise = DMatrix::from_fn(p.space.n_dofs(), 2, |_, _| rng.random_range(-1.0..1.0));
        let noise = &noise / m_distance(&p, &noise, &DMatrix::zeros(noise.nrows(), 2));
        let near = p.orthonormalize(&(&phi.coeffs + eps * noise)).unwrap();
        let r = random_orthogonal(2, &mut rng);
        let psi = near.rotate(&r);
        let al = procrustes_align(&phi, &psi).unwrap();
        let best = m_distance(&p, &(&psi.coeffs * &al.u), &phi.coeffs);
        prop_assert!((best - al.aligned_distance_l2).abs() <= 1e-6 * best.max(1e-12), "{} {}", best, al.aligned_distance_l2);
        for _ in 0..50 {
            let v = random_orthogonal(2, &mut rng);
            prop_assert!(best <= m_distance(&p, &(&psi.coeffs * &v), &phi.coeffs) + 1e-12);
        }
        // the aligned block splits with |S| <= |W|^2
        let aligned = OrbitalSet { space: p.space.clone(), coeffs: &psi.coeffs * &al.u };
        let split = tangent_split(&p.mass, &phi, &aligned).unwrap();
        prop_assert!(split.asymmetry <= 1e-8, "{}", split.asymmetry);
        prop_assert!(split.bound_holds(1e-12), "{} vs {}", split.s.norm(), split.w_norm);
    }
}

#[test]
fn scf_density_ignores_rotation_of_the_start() {
    let p = problem(0, 4);
    let cfg = ScfConfig::default();
    let start = initial_orbitals(&p, InitialGuess::Random { seed: 11 }, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rotated = start.rotate(&random_orthogonal(2, &mut rng));
    let a = scf_solve_from(&p, &cfg, Some(&start)).unwrap();
    let b = scf_solve_from(&p, &cfg, Some(&rotated)).unwrap();
    assert!(a.converged && b.converged);
    let (ra, rb) = (p.density(&a.orbitals), p.density(&b.orbitals));
    let scale = ra.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = ra
        .values
        .iter()
        .zip(&rb.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-6 * scale, "{diff}");
    assert!((a.total_energy - b.total_energy).abs() <= 1e-9 * a.total_energy.abs());
}
