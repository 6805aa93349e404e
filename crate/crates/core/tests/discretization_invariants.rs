use std::sync::Arc;

use ksfem_core::fem::{assemble_mass, assemble_stiffness, assemble_weighted_mass, load_vector, DensityField, FeSpace};
use ksfem_core::ksdft::orthonormalize;
use ksfem_core::mesh::Mesh;
use ksfem_core::sparse::{apply_block, cg_solve, dot, lobpcg, LobpcgOptions, Preconditioner};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(n: usize, degree: usize) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Mesh::uniform(1.0, n).unwrap(), degree).unwrap())
}

fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn assembled_matrices_are_bitwise_symmetric(n in 2usize..5, degree in 1usize..=2, seed in any::<u64>()) {
        let s = space(n, degree);
        prop_assert!(assemble_stiffness(&s).is_symmetric());
        prop_assert!(assemble_mass(&s).is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..s.n_qp()).map(|_| rng.random_range(0.0..2.0)).collect();
        prop_assert!(assemble_weighted_mass(&s, &w).unwrap().is_symmetric());
    }

    #[test]
    fn galerkin_orthogonality(n in 2usize..5, degree in 1usize..=2) {
        let s = space(n, degree);
        let k = assemble_stiffness(&s);
        let f: Vec<f64> = s.qp_points().iter().map(|x| 1.0 + x[0] * x[1] - x[2]).collect();
        let b = load_vector(&s, &f);
        let tol = 1e-12;
        let sol = cg_solve(&k, &b, None, tol, 10_000, Preconditioner::Jacobi).unwrap();
        let r: Vec<f64> = k.matvec(&sol.x).iter().zip(&b).map(|(a, c)| c - a).collect();
        // every basis vector e_i sees a residual at most tol * |b|
        let bn = dot(&b, &b).sqrt();
        prop_assert!(r.iter().all(|ri| ri.abs() <= 10.0 * tol * bn));
    }

    #[test]
    fn density_integrates_to_orbital_count(n in 3usize..5, degree in 1usize..=2, count in 1usize..4, seed in any::<u64>()) {
        let s = space(n, degree);
        prop_assume!(s.n_dofs() > 2 * count);
        let m = assemble_mass(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = DMatrix::from_fn(s.n_dofs(), count, |_, _| rng.random_range(-1.0..1.0));
        let phi = orthonormalize(&s, &m, &block).unwrap();
        let rho = DensityField::from_orbitals(&s, &phi.coeffs);
        let total = rho.integral(&s.qp_weights());
        prop_assert!((total - count as f64).abs() <= 1e-8 * count as f64, "{}", total);
    }

    #[test]
    fn symmetric_matvec(n in 2usize..5, degree in 1usize..=2, seed in any::<u64>()) {
        let s = space(n, degree);
        let k = assemble_stiffness(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(k.nrows(), &mut rng);
        let y = random_vec(k.nrows(), &mut rng);
        let a = dot(&x, &k.matvec(&y));
        let b = dot(&y, &k.matvec(&x));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
        // linearity
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| 2.0 * p - 3.0 * q).collect();
        let lhs = k.matvec(&z);
        let (kx, ky) = (k.matvec(&x), k.matvec(&y));
        let scale = lhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (2.0 * kx[i] - 3.0 * ky[i])).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn lobpcg_trace_and_orthonormality(n in 5usize..8, k in 1usize..4, seed in any::<u64>()) {
        let s = space(n, 1);
        let a = assemble_stiffness(&s);
        let m = assemble_mass(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = DMatrix::from_fn(a.nrows(), k, |_, _| rng.random_range(-1.0..1.0));
        let r = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        for w in r.trace_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        let gram = r.vectors.transpose() * apply_block(&m, &r.vectors);
        prop_assert!((gram - DMatrix::identity(k, k)).amax() <= 1e-10);
    }
}
