use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::ksdft::OrbitalSet;
use crate::mesh::Point;
use crate::sparse::{apply_block, CsrMatrix};

/// Elements per work unit; partial sums are combined in a fixed order so
/// results do not depend on the thread count.
const CHUNK: usize = 512;

/// Values and gradients of every orbital of a block at one point.
pub(crate) struct Sample<'a> {
    pub values: &'a [f64],
    pub grads: &'a [Point],
}

/// Integrates `f` over the field points of `target`'s space, sampling both
/// blocks there. `other` may live on any space over the same box; it is
/// evaluated by point location.
pub(crate) fn integrate_pair<F>(target: &OrbitalSet, other: &OrbitalSet, len: usize, f: F) -> Vec<f64>
where
    F: Fn(f64, &Sample, &Sample, &mut [f64]) + Sync,
{
    let space = &target.space;
    let same = Arc::ptr_eq(space, &other.space) || space.same_as(&other.space);
    let n_el = space.n_elements();
    let chunks: Vec<Vec<f64>> = (0..n_el.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            let mut sampler_t = BlockSampler::new(space, &target.coeffs);
            let mut sampler_o = BlockSampler::new(&other.space, &other.coeffs);
            let rule = space.field_rule();
            for t in c * CHUNK..((c + 1) * CHUNK).min(n_el) {
                let v = space.mesh().tet_vertices(t);
                let vol = space.volume(t);
                sampler_t.load(t);
                if same {
                    sampler_o.load(t);
                }
                for (lam, w) in rule.points.iter().zip(&rule.weights) {
                    let mut x = [0.0; 3];
                    for (k, vk) in v.iter().enumerate() {
                        for d in 0..3 {
                            x[d] += lam[k] * vk[d];
                        }
                    }
                    sampler_t.eval(t, &x);
                    if same {
                        sampler_o.eval(t, &x);
                    } else {
                        let to = other.space.mesh().locate(&x);
                        sampler_o.load(to);
                        sampler_o.eval(to, &x);
                    }
                    f(w * vol, &sampler_t.sample(), &sampler_o.sample(), &mut acc);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for part in chunks {
        for (a, b) in total.iter_mut().zip(part) {
            *a += b;
        }
    }
    total
}

struct BlockSampler<'a> {
    space: &'a FeSpace,
    coeffs: &'a DMatrix<f64>,
    local: Vec<[f64; crate::fem::MAX_LOCAL]>,
    values: Vec<f64>,
    grads: Vec<Point>,
}

impl<'a> BlockSampler<'a> {
    fn new(space: &'a FeSpace, coeffs: &'a DMatrix<f64>) -> Self {
        let n = coeffs.ncols();
        Self {
            space,
            coeffs,
            local: vec![[0.0; crate::fem::MAX_LOCAL]; n],
            values: vec![0.0; n],
            grads: vec![[0.0; 3]; n],
        }
    }

    fn load(&mut self, t: usize) {
        for (j, l) in self.local.iter_mut().enumerate() {
            *l = self.space.local_coeffs(t, self.coeffs.column(j).as_slice());
        }
    }

    fn eval(&mut self, t: usize, x: &Point) {
        for j in 0..self.local.len() {
            let (v, g) = self.space.evaluate_local(t, &self.local[j], x);
            self.values[j] = v;
            self.grads[j] = g;
        }
    }

    fn sample(&self) -> Sample<'_> {
        Sample {
            values: &self.values,
            grads: &self.grads,
        }
    }
}

/// Optimal orthogonal rotation of one orbital block onto another.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Minimizes `||ΨU - Φ||₀` over orthogonal `U`.
    pub u: DMatrix<f64>,
    pub aligned_distance_l2: f64,
    /// Full H¹ norm of `ΨU - Φ`.
    pub aligned_distance_h1: f64,
    pub unaligned_distance_l2: f64,
    /// Singular values of the overlap `ΨᵀMΦ`, descending.
    pub singular_values: Vec<f64>,
    /// The overlap is (numerically) singular, so `U` is not unique.
    pub degenerate: bool,
}

/// Below this the smallest overlap singular value marks the alignment degenerate.
pub const DEGENERATE_OVERLAP: f64 = 1e-8;

/// Aligns `psi` to `phi`. Integrals use the field quadrature of `phi`'s space,
/// where `psi` is evaluated pointwise, so the blocks need not share a mesh.
pub fn procrustes_align(phi: &OrbitalSet, psi: &OrbitalSet) -> Result<Alignment> {
    let n = phi.n_orbitals();
    if psi.n_orbitals() != n {
        return Err(Error::InvalidInput(format!(
            "cannot align {} orbitals to {n}",
            psi.n_orbitals()
        )));
    }
    if (phi.space.mesh().half_width() - psi.space.mesh().half_width()).abs() > 1e-12 {
        return Err(Error::SpaceMismatch("orbital blocks live on different boxes".into()));
    }
    let overlap = integrate_pair(phi, psi, n * n, |w, p, q, acc| {
        for i in 0..n {
            for j in 0..n {
                acc[i * n + j] += w * q.values[i] * p.values[j];
            }
        }
    });
    // rows index psi, columns phi
    let c = DMatrix::from_row_slice(n, n, &overlap);
    let svd = c.svd(true, true);
    let (Some(left), Some(right_t)) = (svd.u, svd.v_t) else {
        return Err(Error::InvalidInput("singular value decomposition failed".into()));
    };
    let u = left * right_t;
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let degenerate = singular_values.last().is_some_and(|&s| s < DEGENERATE_OVERLAP);
    if degenerate {
        log::warn!("procrustes overlap is rank deficient: {singular_values:?}");
    }
    let (l2, semi) = rotated_distance(phi, psi, &u);
    let (l2_plain, _) = rotated_distance(phi, psi, &DMatrix::identity(n, n));
    Ok(Alignment {
        u,
        aligned_distance_l2: l2.sqrt(),
        aligned_distance_h1: (l2 + semi).sqrt(),
        unaligned_distance_l2: l2_plain.sqrt(),
        singular_values,
        degenerate,
    })
}

/// Squared L² norm and H¹ seminorm of `ΨU - Φ`, differenced pointwise.
pub(crate) fn rotated_distance(phi: &OrbitalSet, psi: &OrbitalSet, u: &DMatrix<f64>) -> (f64, f64) {
    let n = phi.n_orbitals();
    let acc = integrate_pair(phi, psi, 2, |w, p, q, acc| {
        for i in 0..n {
            let mut dv = -p.values[i];
            let mut dg = p.grads[i].map(|g| -g);
            for k in 0..n {
                dv += q.values[k] * u[(k, i)];
                for d in 0..3 {
                    dg[d] += q.grads[k][d] * u[(k, i)];
                }
            }
            acc[0] += w * dv * dv;
            acc[1] += w * (dg[0] * dg[0] + dg[1] * dg[1] + dg[2] * dg[2]);
        }
    });
    (acc[0], acc[1])
}

/// Decomposition `Ψ = Φ + SΦ + W` of a nearby aligned block.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSplit {
    /// Symmetric `N×N` part.
    pub s: DMatrix<f64>,
    /// Tangent component, `WᵀMΦ = 0`.
    pub w: DMatrix<f64>,
    /// `||W||₀`, Frobenius over orbitals.
    pub w_norm: f64,
    /// `||ΦᵀMΨ - (ΦᵀMΨ)ᵀ||_F`; zero when `Ψ` is aligned.
    pub asymmetry: f64,
}

impl TangentSplit {
    /// `|S|_F ≤ ||W||₀²`.
    pub fn bound_holds(&self, slack: f64) -> bool {
        self.s.norm() <= self.w_norm * self.w_norm + slack
    }
}

/// Splits `psi` relative to `phi`; both must be on the same space and `psi`
/// should already be aligned (see [`procrustes_align`]).
pub fn tangent_split(mass: &CsrMatrix, phi: &OrbitalSet, psi: &OrbitalSet) -> Result<TangentSplit> {
    if !(Arc::ptr_eq(&phi.space, &psi.space) || phi.space.same_as(&psi.space))
        || psi.coeffs.shape() != phi.coeffs.shape()
    {
        return Err(Error::SpaceMismatch("tangent split needs blocks on one space".into()));
    }
    if mass.nrows() != phi.coeffs.nrows() {
        return Err(Error::SpaceMismatch("mass matrix does not match the blocks".into()));
    }
    let diff = &psi.coeffs - &phi.coeffs;
    let dist = m_inner(mass, &diff, &diff).sqrt();
    if dist >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "blocks are {dist:.3} apart in L²; the split is only valid below 1"
        )));
    }
    let mphi = apply_block(mass, &phi.coeffs);
    let c = mphi.transpose() * &psi.coeffs;
    let asymmetry = (&c - c.transpose()).norm();
    let w = &psi.coeffs - &phi.coeffs * &c;
    let s = (&c + c.transpose()) * 0.5 - DMatrix::identity(c.nrows(), c.ncols());
    let w_norm = m_inner(mass, &w, &w).max(0.0).sqrt();
    Ok(TangentSplit {
        s,
        w,
        w_norm,
        asymmetry,
    })
}

/// `tr(AᵀMB)`.
pub(crate) fn m_inner(mass: &CsrMatrix, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    apply_block(mass, b).dot(a)
}

/// `X - Φ(ΦᵀMX)`.
pub(crate) fn project_tangent(mass: &CsrMatrix, phi: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mphi = apply_block(mass, phi);
    x - phi * (mphi.transpose() * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ksdft::{initial_orbitals, InitialGuess, KsProblem};
    use crate::physics::free_box;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n_orb: usize) -> KsProblem {
        let mut sys = free_box();
        sys.n_orbitals = n_orb;
        KsProblem::uniform(sys, 4, 1).unwrap()
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        a.qr().q()
    }

    #[test]
    fn identity_alignment() {
        let p = problem(2);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed: 1 }, 2).unwrap();
        let a = procrustes_align(&phi, &phi).unwrap();
        assert!((&a.u - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!(a.aligned_distance_l2 < 1e-7 && a.aligned_distance_h1 < 1e-7);
        assert!(!a.degenerate);
    }

    #[test]
    fn recovers_rotation() {
        let p = problem(3);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed: 2 }, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u0 = random_orthogonal(3, &mut rng);
        let psi = phi.rotate(&u0);
        let a = procrustes_align(&phi, &psi).unwrap();
        assert!((&a.u - u0.transpose()).amax() < 1e-10);
        assert!(a.aligned_distance_l2 < 1e-7);
        assert!((&a.u.transpose() * &a.u - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!(a.aligned_distance_l2 <= a.unaligned_distance_l2);
    }

    #[test]
    fn beats_sampled_rotations() {
        let p = problem(2);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed: 5 }, 2).unwrap();
        let other = initial_orbitals(&p, InitialGuess::Random { seed: 6 }, 2).unwrap();
        // a nearby block with a sign flip and a rotation
        let mixed = p.orthonormalize(&(&phi.coeffs * 0.9 + &other.coeffs * 0.3)).unwrap();
        let psi = mixed.rotate(&DMatrix::from_row_slice(2, 2, &[0.6, 0.8, 0.8, -0.6]));
        let a = procrustes_align(&phi, &psi).unwrap();
        let best = a.aligned_distance_l2.powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..10_000 {
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            let (s, c) = th.sin_cos();
            let u = if k % 2 == 0 {
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            } else {
                DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
            };
            let (d2, _) = rotated_distance(&phi, &psi, &u);
            assert!(d2 >= best - 1e-8, "{d2} < {best}");
        }
    }

    #[test]
    fn cross_mesh_alignment_matches_nested_values() {
        let sys = free_box();
        let coarse = KsProblem::uniform(sys.clone(), 4, 1).unwrap();
        let fine = KsProblem::uniform(sys, 8, 1).unwrap();
        let f = |x: &Point| (x[0].cos() * x[1].cos() * x[2].cos()).max(0.0);
        let gc = coarse.space.interpolate(f).unwrap();
        let phi_c = coarse.orthonormalize(&DMatrix::from_vec(gc.len(), 1, gc)).unwrap();
        // embed the coarse function in the nested fine space exactly
        let coords = fine.space.dof_coords();
        let emb: Vec<f64> = coords
            .iter()
            .map(|x| coarse.space.evaluate(phi_c.coeffs.as_slice(), x).0)
            .collect();
        let phi_f = OrbitalSet {
            space: fine.space.clone(),
            coeffs: DMatrix::from_vec(emb.len(), 1, emb),
        };
        let a = procrustes_align(&phi_f, &phi_c).unwrap();
        assert!(a.aligned_distance_h1 < 1e-10, "{}", a.aligned_distance_h1);
    }

    #[test]
    fn tangent_split_identities() {
        let p = problem(2);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed: 8 }, 2).unwrap();
        let same = tangent_split(&p.mass, &phi, &phi).unwrap();
        assert!(same.s.amax() < 1e-12 && same.w.amax() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let noise = initial_orbitals(&p, InitialGuess::Random { seed: 100 + trial }, 2).unwrap();
            let eps = 0.02 + 0.2 * rng.random::<f64>();
            let raw = p.orthonormalize(&(&phi.coeffs + &noise.coeffs * eps)).unwrap();
            let a = procrustes_align(&phi, &raw).unwrap();
            let psi = raw.rotate(&a.u);
            let split = tangent_split(&p.mass, &phi, &psi).unwrap();
            let mphi = apply_block(&p.mass, &phi.coeffs);
            assert!((mphi.transpose() * &split.w).norm() <= 1e-10);
            let recon = &phi.coeffs + &phi.coeffs * &split.s + &split.w - &psi.coeffs;
            assert!(m_inner(&p.mass, &recon, &recon).sqrt() <= 1e-10 + split.asymmetry);
            assert!(split.asymmetry < 1e-10, "{}", split.asymmetry);
            assert!(
                split.bound_holds(1e-10),
                "{} > {}",
                split.s.norm(),
                split.w_norm.powi(2)
            );
        }
    }

    #[test]
    fn tangent_split_refuses_distant_blocks() {
        let p = problem(1);
        let phi = initial_orbitals(&p, InitialGuess::Random { seed: 1 }, 1).unwrap();
        let neg = OrbitalSet {
            space: phi.space.clone(),
            coeffs: -&phi.coeffs,
        };
        assert!(tangent_split(&p.mass, &phi, &neg).is_err());
    }
}
