//! Hartree potential: `-Δ V_H = 4π ρ` on the box with Dirichlet data
//! approximating the free-space Newtonian potential of `ρ`.
//!
//! The boundary data depends linearly on `ρ`, `g = G ρ`, so the discrete
//! potential is `V_H = u0 + H G ρ` where `u0` solves the homogeneous problem and
//! `H` is the discrete harmonic extension. The induced Coulomb form
//! `(σ, V_H[ρ])` is not symmetric. The Hamiltonian uses the gradient of the
//! discrete Hartree energy `½ (ρ, V_H[ρ])` instead,
//! `V_sym = u0 + ½ (H G + Gᵀ Hᵀ) ρ`, which keeps SCF fixed points and energy
//! minimizers identical.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_boundary_coupling, assemble_stiffness, node_load_vector, FeSpace};
use crate::mesh::{dist, Point};
use crate::sparse::{cg_solve, dot, CsrMatrix, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Monopole, dipole and quadrupole moments about the origin.
    #[default]
    Multipole2,
    /// Direct quadrature of `∫ρ(y)/|x-y| dy` at every boundary node.
    Direct,
}

pub const HARTREE_CG_TOL: f64 = 1e-12;
const HARTREE_CG_MAXIT: usize = 20_000;

const N_MULTIPOLE: usize = 10;
const QUAD_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Kernels `a_k(x)` with `1/|x-y| ≈ Σ_k a_k(x) p_k(y)` for `|y| < |x|`.
fn multipole_kernels(x: &Point) -> [f64; N_MULTIPOLE] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let r = r2.sqrt();
    let r3 = r2 * r;
    let r5 = r3 * r2;
    let mut a = [0.0; N_MULTIPOLE];
    a[0] = 1.0 / r;
    for c in 0..3 {
        a[1 + c] = x[c] / r3;
    }
    for (k, &(i, j)) in QUAD_PAIRS.iter().enumerate() {
        let delta = if i == j { r2 } else { 0.0 };
        let mult = if i == j { 1.0 } else { 2.0 };
        a[4 + k] = mult * (3.0 * x[i] * x[j] - delta) / (2.0 * r5);
    }
    a
}

fn multipole_polys(y: &Point) -> [f64; N_MULTIPOLE] {
    let mut p = [0.0; N_MULTIPOLE];
    p[0] = 1.0;
    p[1..4].copy_from_slice(y);
    for (k, &(i, j)) in QUAD_PAIRS.iter().enumerate() {
        p[4 + k] = y[i] * y[j];
    }
    p
}

#[derive(Debug, Clone)]
pub struct HartreeSolution {
    /// Potential at every node, boundary data included.
    pub node_values: Vec<f64>,
    pub boundary_values: Vec<f64>,
    /// `V_H` at the field quadrature points.
    pub potential: Vec<f64>,
    /// Gradient of the discrete Hartree energy at the field quadrature points.
    pub symmetric_potential: Vec<f64>,
    /// `½ D(ρ,ρ)` of the discrete model.
    pub energy: f64,
    pub cg_iterations: usize,
}

impl HartreeSolution {
    pub fn potential_at(&self, space: &FeSpace, x: &Point) -> f64 {
        space.evaluate_nodal(&self.node_values, x).0
    }
}

/// Per-space Poisson data; reusable across densities.
#[derive(Debug)]
pub struct HartreeSolver {
    space: Arc<FeSpace>,
    rule: BoundaryRule,
    stiffness: CsrMatrix,
    coupling: CsrMatrix,
    weights: Vec<f64>,
    points: Vec<Point>,
    boundary_points: Vec<Point>,
    /// Multipole only: `p_k` and harmonic extensions of `a_k` at the field points.
    polys: Vec<Vec<f64>>,
    extensions: Vec<Vec<f64>>,
    extension_nodes: Vec<Vec<f64>>,
}

impl HartreeSolver {
    pub fn new(space: Arc<FeSpace>, rule: BoundaryRule) -> Result<Self> {
        let stiffness = assemble_stiffness(&space);
        let coupling = assemble_boundary_coupling(&space);
        let boundary_points: Vec<Point> = space.boundary_nodes().iter().map(|&n| space.nodes()[n]).collect();
        let mut solver = Self {
            weights: space.qp_weights(),
            points: space.qp_points(),
            space,
            rule,
            stiffness,
            coupling,
            boundary_points,
            polys: Vec::new(),
            extensions: Vec::new(),
            extension_nodes: Vec::new(),
        };
        if rule == BoundaryRule::Multipole2 {
            let kernels: Vec<[f64; N_MULTIPOLE]> = solver.boundary_points.iter().map(multipole_kernels).collect();
            for k in 0..N_MULTIPOLE {
                let g: Vec<f64> = kernels.iter().map(|a| a[k]).collect();
                let (nodes, _) = solver.extend(&g)?;
                solver.extensions.push(solver.space.node_values_at_qp(&nodes));
                solver.extension_nodes.push(nodes);
                solver
                    .polys
                    .push(solver.points.iter().map(|y| multipole_polys(y)[k]).collect());
            }
        }
        Ok(solver)
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn rule(&self) -> BoundaryRule {
        self.rule
    }

    fn cg(&self, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        if b.iter().all(|&v| v == 0.0) {
            return Ok((vec![0.0; b.len()], 0));
        }
        let out = cg_solve(
            &self.stiffness,
            b,
            None,
            HARTREE_CG_TOL,
            HARTREE_CG_MAXIT,
            Preconditioner::Jacobi,
        )?;
        Ok((out.x, out.iterations))
    }

    /// Discrete harmonic extension of boundary data, as a nodal vector.
    fn extend(&self, g: &[f64]) -> Result<(Vec<f64>, usize)> {
        let rhs: Vec<f64> = self.coupling.matvec(g).iter().map(|v| -v).collect();
        let (u, it) = self.cg(&rhs)?;
        let mut nodes = self.space.to_nodal(&u);
        for (k, &n) in self.space.boundary_nodes().iter().enumerate() {
            nodes[n] = g[k];
        }
        Ok((nodes, it))
    }

    /// Hartree potential of a density sampled at the field points. Linear in
    /// `rho`, which may be signed.
    pub fn solve(&self, rho: &[f64]) -> Result<HartreeSolution> {
        if rho.len() != self.points.len() {
            return Err(Error::SpaceMismatch(format!(
                "density has {} samples, space has {} quadrature points",
                rho.len(),
                self.points.len()
            )));
        }
        let space = &self.space;
        let node_load = node_load_vector(space, rho);
        let b: Vec<f64> = space.free_nodes().iter().map(|&n| 4.0 * PI * node_load[n]).collect();
        let (u, mut iterations) = self.cg(&b)?;
        let u0_qp = space.values_at_qp(&u);
        // ½∫ρ u0 evaluated variationally: bᵀu/4π - uᵀKu/8π
        let ku = self.stiffness.matvec(&u);
        let e0 = dot(&b, &u) / (4.0 * PI) - dot(&u, &ku) / (8.0 * PI);

        let mut node_values = space.to_nodal(&u);
        let mut potential = u0_qp.clone();
        let mut symmetric = u0_qp;
        let mut energy = e0;

        let boundary_values = match self.rule {
            BoundaryRule::Multipole2 => {
                let mut g = vec![0.0; self.boundary_points.len()];
                for k in 0..N_MULTIPOLE {
                    let m_k = weighted_sum(&self.weights, rho, &self.polys[k]);
                    let c_k = weighted_sum(&self.weights, rho, &self.extensions[k]);
                    energy += 0.5 * m_k * c_k;
                    for (q, v) in potential.iter_mut().enumerate() {
                        *v += m_k * self.extensions[k][q];
                    }
                    for (q, v) in symmetric.iter_mut().enumerate() {
                        *v += 0.5 * (m_k * self.extensions[k][q] + c_k * self.polys[k][q]);
                    }
                    for (n, v) in node_values.iter_mut().enumerate() {
                        *v += m_k * self.extension_nodes[k][n];
                    }
                    for (gb, &n) in g.iter_mut().zip(space.boundary_nodes()) {
                        *gb += m_k * self.extension_nodes[k][n];
                    }
                }
                g
            }
            BoundaryRule::Direct => {
                let wr: Vec<f64> = self.weights.iter().zip(rho).map(|(w, r)| w * r).collect();
                let g: Vec<f64> = self
                    .boundary_points
                    .par_iter()
                    .map(|x| newton_sum(x, &self.points, &wr))
                    .collect();
                let (ext, it) = self.extend(&g)?;
                iterations += it;
                let ext_qp = space.node_values_at_qp(&ext);
                energy += 0.5 * weighted_sum(&self.weights, rho, &ext_qp);
                // transpose part: beta = Hᵀ W ρ on the boundary, then Gᵀ beta
                let kbi_u = self.coupling.transpose_matvec(&u);
                let beta: Vec<f64> = space
                    .boundary_nodes()
                    .iter()
                    .zip(&kbi_u)
                    .map(|(&n, kv)| node_load[n] - kv / (4.0 * PI))
                    .collect();
                let transpose: Vec<f64> = self
                    .points
                    .par_iter()
                    .map(|y| newton_sum(y, &self.boundary_points, &beta))
                    .collect();
                for q in 0..potential.len() {
                    potential[q] += ext_qp[q];
                    symmetric[q] += 0.5 * (ext_qp[q] + transpose[q]);
                }
                for (v, e) in node_values.iter_mut().zip(&ext) {
                    *v += e;
                }
                g
            }
        };
        Ok(HartreeSolution {
            node_values,
            boundary_values,
            potential,
            symmetric_potential: symmetric,
            energy,
            cg_iterations: iterations,
        })
    }

    /// Symmetrized Hartree potential of a (signed) density perturbation.
    pub fn symmetric_potential(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(sigma)?.symmetric_potential)
    }
}

fn weighted_sum(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

fn newton_sum(x: &Point, sources: &[Point], charges: &[f64]) -> f64 {
    sources.iter().zip(charges).map(|(y, c)| c / dist(x, y)).sum()
}

/// Convenience wrapper building a one-off solver.
pub fn solve_hartree(space: &Arc<FeSpace>, rho: &[f64], rule: BoundaryRule) -> Result<HartreeSolution> {
    HartreeSolver::new(space.clone(), rule)?.solve(rho)
}

/// Direct double sum `D(f,g) = ∫∫ f(x) g(y) / |x-y|` over quadrature points.
///
/// Self pairs are replaced by the integral of `1/r` over a ball with the
/// volume of the point's weight, `2π R²`. Quadratic cost; meant as an oracle
/// on coarse meshes.
pub fn coulomb_d(f: &[f64], g: &[f64], points: &[Point], weights: &[f64]) -> Result<f64> {
    if f.len() != points.len() || g.len() != points.len() || weights.len() != points.len() {
        return Err(Error::SpaceMismatch(
            "coulomb_d arguments on different quadrature sets".into(),
        ));
    }
    let wf: Vec<f64> = f.iter().zip(weights).map(|(a, w)| a * w).collect();
    let wg: Vec<f64> = g.iter().zip(weights).map(|(a, w)| a * w).collect();
    let rows: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|p| {
            let x = &points[p];
            let mut acc = 0.0;
            for q in 0..p {
                // symmetric pairing keeps D(f,g) = D(g,f) exactly
                acc += (wf[p] * wg[q] + wf[q] * wg[p]) / dist(x, &points[q]);
            }
            let radius = (3.0 * weights[p] / (4.0 * PI)).cbrt();
            acc + 0.5 * (wf[p] * g[p] + wg[p] * f[p]) * 2.0 * PI * radius * radius
        })
        .collect();
    // sequential reduction: the result must not depend on thread scheduling
    Ok(rows.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(space: &FeSpace) -> Vec<f64> {
        space
            .qp_points()
            .iter()
            .map(|x| PI.powf(-1.5) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
            .collect()
    }

    #[test]
    fn multipole_expansion_accuracy() {
        let x = [4.0, -3.0, 5.0];
        let y = [0.3, 0.2, -0.4];
        let a = multipole_kernels(&x);
        let p = multipole_polys(&y);
        let approx: f64 = a.iter().zip(&p).map(|(a, p)| a * p).sum();
        let exact = 1.0 / dist(&x, &y);
        // Legendre remainder from the octupole term on: sum_{l>=3} |y|^l / |x|^(l+1)
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let s = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let bound = s.powi(3) / r.powi(4) / (1.0 - s / r);
        assert!((approx - exact).abs() < bound);
        assert!((approx - exact).abs() > 0.0);
    }

    #[test]
    fn zero_density() {
        let space = Arc::new(FeSpace::new(Mesh::uniform(2.0, 3).unwrap(), 1).unwrap());
        for rule in [BoundaryRule::Multipole2, BoundaryRule::Direct] {
            let s = solve_hartree(&space, &vec![0.0; space.n_qp()], rule).unwrap();
            assert_eq!(s.energy, 0.0);
            assert!(s.potential.iter().all(|&v| v == 0.0));
            assert!(s.node_values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gaussian_potential() {
        let expect = libm::erf(2.0) / 2.0;
        assert!((expect - 0.497_661).abs() < 1e-6);
        let e_exact = 1.0 / (2.0 * PI).sqrt();
        let mut errs = Vec::new();
        for n in [6, 12] {
            let space = Arc::new(FeSpace::new(Mesh::uniform(4.0, n).unwrap(), 2).unwrap());
            let rho = gaussian(&space);
            let s = solve_hartree(&space, &rho, BoundaryRule::Multipole2).unwrap();
            let v = s.potential_at(&space, &[2.0, 0.0, 0.0]);
            let v0 = s.potential_at(&space, &[0.0, 0.0, 0.0]);
            errs.push((
                (v - expect).abs(),
                (v0 - 2.0 / PI.sqrt()).abs(),
                (s.energy - e_exact).abs(),
            ));
        }
        let (v2, v0, e) = errs[1];
        assert!(v2 < 1e-3 && v0 < 1e-2 && e < 2e-3 * e_exact, "{errs:?}");
        assert!(errs[1].1 < errs[0].1 && errs[1].2 < errs[0].2);
    }

    #[test]
    fn rules_agree_and_energy_matches_potential() {
        let space = Arc::new(FeSpace::new(Mesh::uniform(5.0, 6).unwrap(), 1).unwrap());
        let w = space.qp_weights();
        // off-center density with dipole and quadrupole moments
        let rho: Vec<f64> = space
            .qp_points()
            .iter()
            .map(|x| {
                let d = [x[0] - 0.7, x[1] + 0.3, x[2] - 0.2];
                (-(d[0] * d[0] + 2.0 * d[1] * d[1] + d[2] * d[2])).exp()
            })
            .collect();
        let m = solve_hartree(&space, &rho, BoundaryRule::Multipole2).unwrap();
        let d = solve_hartree(&space, &rho, BoundaryRule::Direct).unwrap();
        for s in [&m, &d] {
            let half: f64 = 0.5 * weighted_sum(&w, &rho, &s.potential);
            let sym: f64 = 0.5 * weighted_sum(&w, &rho, &s.symmetric_potential);
            assert!((half - s.energy).abs() < 1e-9 * s.energy);
            assert!((sym - s.energy).abs() < 1e-9 * s.energy);
        }
        assert!((m.energy - d.energy).abs() < 1e-3 * d.energy);
    }

    #[test]
    fn symmetric_form_is_symmetric() {
        let space = Arc::new(FeSpace::new(Mesh::uniform(3.0, 4).unwrap(), 1).unwrap());
        let w = space.qp_weights();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for rule in [BoundaryRule::Multipole2, BoundaryRule::Direct] {
            let solver = HartreeSolver::new(space.clone(), rule).unwrap();
            let a: Vec<f64> = (0..space.n_qp()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..space.n_qp()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let va = solver.symmetric_potential(&a).unwrap();
            let vb = solver.symmetric_potential(&b).unwrap();
            let ab = weighted_sum(&w, &b, &va);
            let ba = weighted_sum(&w, &a, &vb);
            assert!((ab - ba).abs() < 1e-9 * ab.abs().max(1.0), "{rule:?}: {ab} {ba}");
        }
    }

    #[test]
    fn linearity() {
        let space = Arc::new(FeSpace::new(Mesh::uniform(3.0, 4).unwrap(), 2).unwrap());
        let solver = HartreeSolver::new(space.clone(), BoundaryRule::Multipole2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r1: Vec<f64> = (0..space.n_qp()).map(|_| rng.random_range(0.0..1.0)).collect();
        let r2: Vec<f64> = (0..space.n_qp()).map(|_| rng.random_range(0.0..1.0)).collect();
        let mix: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let s1 = solver.solve(&r1).unwrap();
        let s2 = solver.solve(&r2).unwrap();
        let sm = solver.solve(&mix).unwrap();
        let scale = sm.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for q in 0..space.n_qp() {
            let lin = 2.0 * s1.potential[q] - 0.5 * s2.potential[q];
            assert!((lin - sm.potential[q]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn coulomb_oracle_properties() {
        let space = FeSpace::new(Mesh::uniform(2.0, 2).unwrap(), 1).unwrap();
        let pts = space.qp_points();
        let w = space.qp_weights();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zero = vec![0.0; pts.len()];
        for _ in 0..20 {
            let f: Vec<f64> = (0..pts.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let g: Vec<f64> = (0..pts.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(coulomb_d(&zero, &f, &pts, &w).unwrap(), 0.0);
            assert_eq!(
                coulomb_d(&f, &g, &pts, &w).unwrap(),
                coulomb_d(&g, &f, &pts, &w).unwrap()
            );
            assert!(coulomb_d(&f, &f, &pts, &w).unwrap() >= 0.0);
        }
        assert!(coulomb_d(&zero[1..], &zero, &pts, &w).is_err());
    }

    #[test]
    fn hartree_energy_matches_direct_double_sum() {
        let space = Arc::new(FeSpace::new(Mesh::uniform(3.0, 6).unwrap(), 2).unwrap());
        let rho = gaussian(&space);
        let s = solve_hartree(&space, &rho, BoundaryRule::Multipole2).unwrap();
        let d = coulomb_d(&rho, &rho, &space.qp_points(), &space.qp_weights()).unwrap();
        assert!(
            (s.energy - 0.5 * d).abs() < 0.05 * 0.5 * d,
            "{} vs {}",
            s.energy,
            0.5 * d
        );
    }
}
