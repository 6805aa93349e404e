use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::align::project_tangent;
use crate::error::{Error, Result};
use crate::fem::load_vector;
use crate::ksdft::{initial_orbitals, GroundState, Hamiltonian, InitialGuess, KsProblem, OrbitalSet};
use crate::sparse::{apply_block, cg_solve, eigensolve, LobpcgOptions, Preconditioner};

/// Tolerance on `ΨᵀMΦ` for a block to count as tangent.
pub const TANGENT_TOL: f64 = 1e-8;

/// The second-order operator `L′_Φ` at a fixed orbital block:
/// `½E″(Φ)(Ψ,Γ) - Σ λ_ij (ψ_j, γ_i)`.
pub struct SecondOrder<'a> {
    problem: &'a KsProblem,
    phi: OrbitalSet,
    lambda: DMatrix<f64>,
    hamiltonian: Hamiltonian,
    /// `E″(ρ)` at the field points, zero without exchange-correlation.
    xc2: Vec<f64>,
    /// Orbital values at the field points, one vector per orbital.
    phi_qp: Vec<Vec<f64>>,
}

impl<'a> SecondOrder<'a> {
    pub fn new(problem: &'a KsProblem, phi: &OrbitalSet) -> Result<Self> {
        let hamiltonian = problem.hamiltonian_of(phi)?;
        let a_phi = apply_block(&hamiltonian, &phi.coeffs);
        let l = phi.coeffs.transpose() * a_phi;
        let lambda = (&l + l.transpose()) * 0.5;
        let rho = problem.density(phi);
        let xc = problem.system.xc;
        let xc2 = if xc.is_none() {
            vec![0.0; rho.values.len()]
        } else {
            // floored inside the functional: E″ is singular at zero density
            rho.values
                .iter()
                .map(|&t| xc.second_derivative(t))
                .collect::<Result<_>>()?
        };
        let phi_qp = phi
            .coeffs
            .column_iter()
            .map(|c| problem.space.values_at_qp(c.as_slice()))
            .collect();
        Ok(Self {
            problem,
            phi: phi.clone(),
            lambda,
            hamiltonian,
            xc2,
            phi_qp,
        })
    }

    pub fn multipliers(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn orbitals(&self) -> &OrbitalSet {
        &self.phi
    }

    fn check_block(&self, psi: &DMatrix<f64>) -> Result<()> {
        if psi.shape() != self.phi.coeffs.shape() {
            return Err(Error::InvalidInput(format!(
                "direction block is {:?}, orbitals are {:?}",
                psi.shape(),
                self.phi.coeffs.shape()
            )));
        }
        Ok(())
    }

    /// The dual block `Γ ↦ L′(Ψ, Γ)`: `AΨ + W(f)Φ - MΨΛ` with
    /// `f = E″(ρ)δρ + V_H[δρ]`, `δρ = 2Σ φ_j ψ_j`.
    pub fn dual(&self, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_block(psi)?;
        let p = self.problem;
        let mut out = apply_block(&self.hamiltonian, psi);
        out -= apply_block(&p.mass, psi) * &self.lambda;

        let nonlinear = p.hartree.is_some() || !p.system.xc.is_none();
        if nonlinear {
            let nq = self.xc2.len();
            let mut drho = vec![0.0; nq];
            for (j, col) in psi.column_iter().enumerate() {
                let psi_qp = p.space.values_at_qp(col.as_slice());
                for ((d, a), b) in drho.iter_mut().zip(&self.phi_qp[j]).zip(&psi_qp) {
                    *d += 2.0 * a * b;
                }
            }
            let mut f: Vec<f64> = self.xc2.iter().zip(&drho).map(|(e, d)| e * d).collect();
            if let Some(h) = &p.hartree {
                let vh = h.symmetric_potential(&drho)?;
                for (fi, v) in f.iter_mut().zip(vh) {
                    *fi += v;
                }
            }
            for (i, phi_i) in self.phi_qp.iter().enumerate() {
                let g: Vec<f64> = f.iter().zip(phi_i).map(|(a, b)| a * b).collect();
                let load = load_vector(&p.space, &g);
                let mut col = out.column_mut(i);
                col += DVector::from_vec(load);
            }
        }
        Ok(out)
    }

    /// `L′(Ψ, Γ)`.
    pub fn form(&self, psi: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<f64> {
        self.check_block(gamma)?;
        Ok(self.dual(psi)?.dot(gamma))
    }

    /// Riesz representative in the `M` inner product, projected to the
    /// tangent space at `Φ`.
    pub fn apply(&self, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mphi = apply_block(&self.problem.mass, &self.phi.coeffs);
        let off = (mphi.transpose() * psi).amax();
        if off > TANGENT_TOL {
            return Err(Error::InvalidInput(format!(
                "direction is not tangent: |ΨᵀMΦ| = {off:.3e}"
            )));
        }
        let dual = self.dual(psi)?;
        let riesz = solve_mass(self.problem, &dual)?;
        Ok(project_tangent(&self.problem.mass, &self.phi.coeffs, &riesz))
    }
}

pub(crate) fn solve_mass(problem: &KsProblem, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    for j in 0..rhs.ncols() {
        let sol = cg_solve(
            &problem.mass,
            rhs.column(j).as_slice(),
            None,
            1e-13,
            10_000,
            Preconditioner::Jacobi,
        )?;
        out.set_column(j, &DVector::from_vec(sol.x));
    }
    Ok(out)
}

/// `L′_Φ Ψ` at a ground state, as a tangent block.
pub fn hessian_apply(problem: &KsProblem, gs: &GroundState, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    SecondOrder::new(problem, &gs.orbitals)?.apply(psi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfSupReport {
    /// Smallest eigenvalue of the restricted form; positive means coercive,
    /// hence inf-sup stable, on the sampled subspace.
    pub gamma: f64,
    /// Smallest singular value of the restricted form.
    pub min_singular_value: f64,
    /// All eigenvalues of the restricted form, ascending.
    pub eigenvalues: Vec<f64>,
    pub subspace_dim: usize,
    /// `λ_{N+1} - λ_N` of `A_Φ`.
    pub gap: f64,
    pub positive: bool,
}

/// Estimates the inf-sup constant of `L′_Φ` on the tangent directions built
/// from the next `subspace_dim` unoccupied eigenvectors of `A_Φ`, each placed
/// in every orbital slot (dimension `N·subspace_dim`).
pub fn infsup_audit(problem: &KsProblem, gs: &GroundState, subspace_dim: usize) -> Result<InfSupReport> {
    if subspace_dim == 0 {
        return Err(Error::InvalidInput("inf-sup audit needs subspace_dim ≥ 1".into()));
    }
    if !gs.converged {
        return Err(Error::InvalidInput(
            "inf-sup audit needs a converged ground state".into(),
        ));
    }
    let n = gs.orbitals.n_orbitals();
    let op = SecondOrder::new(problem, &gs.orbitals)?;
    let wanted = n + subspace_dim;
    if wanted + 2 > problem.space.n_dofs() {
        return Err(Error::InvalidInput(format!(
            "subspace_dim {subspace_dim} exceeds the {} available dofs",
            problem.space.n_dofs()
        )));
    }
    let mut x0 = initial_orbitals(problem, InitialGuess::AtomicGaussian, wanted + 2)?.coeffs;
    for j in 0..n {
        x0.set_column(j, &gs.orbitals.coeffs.column(j));
    }
    let x0 = problem.orthonormalize(&x0)?.coeffs;
    let eig = eigensolve(
        &op.hamiltonian,
        &problem.mass,
        &x0,
        &LobpcgOptions {
            tol: 1e-9,
            maxit: 5000,
            wanted,
            ..Default::default()
        },
    )?;
    let gap = eig.values[n] - eig.values[n - 1];
    let virt = eig.vectors.columns(n, subspace_dim).clone_owned();
    let virt = project_tangent(&problem.mass, &gs.orbitals.coeffs, &virt);
    let virt = problem.orthonormalize(&virt)?.coeffs;

    let dim = n * subspace_dim;
    let rows = problem.space.n_dofs();
    let basis = |a: usize| {
        let (slot, v) = (a % n, a / n);
        let mut b = DMatrix::zeros(rows, n);
        b.set_column(slot, &virt.column(v));
        b
    };
    let mut form = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let dual = op.dual(&basis(a))?;
        for b in 0..dim {
            form[(a, b)] = dual.column(b % n).dot(&virt.column(b / n));
        }
    }
    let asym = (&form - form.transpose()).amax();
    if asym > 1e-8 * form.amax().max(1.0) {
        log::warn!("second-order form is not symmetric on the audit subspace: {asym:.3e}");
    }
    let sym = (&form + form.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let min_singular_value = form.singular_values().iter().copied().fold(f64::INFINITY, f64::min);
    let gamma = eigenvalues[0];
    Ok(InfSupReport {
        gamma,
        min_singular_value,
        eigenvalues,
        subspace_dim,
        gap,
        positive: gamma > 0.0,
    })
}
