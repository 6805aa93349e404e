use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::problem::{KsProblem, OrbitalSet};
use super::scf::{GroundState, Method, ScfStep};
use crate::error::{Error, Result};
use crate::sparse::{apply_block, cg_solve, Preconditioner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectOptions {
    /// Stop when the projected gradient has `M`-norm below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 5000,
            armijo: 1e-4,
            max_halvings: 40,
        }
    }
}

/// Riemannian gradient `M⁻¹(2AΦ)` projected onto the tangent space at `Φ`,
/// with its squared `M`-norm.
fn projected_gradient(problem: &KsProblem, phi: &OrbitalSet) -> Result<(DMatrix<f64>, f64)> {
    let h = problem.hamiltonian_of(phi)?;
    let ag = apply_block(&h, &phi.coeffs) * 2.0;
    let mut g = DMatrix::zeros(ag.nrows(), ag.ncols());
    for j in 0..ag.ncols() {
        let sol = cg_solve(
            &problem.mass,
            ag.column(j).as_slice(),
            None,
            1e-13,
            10_000,
            Preconditioner::Jacobi,
        )?;
        g.set_column(j, &nalgebra::DVector::from_vec(sol.x));
    }
    // G - Φ(ΦᵀMG) with MG = 2AΦ
    let g = &g - &phi.coeffs * (phi.coeffs.transpose() * &ag);
    let norm2 = m_inner(problem, &g, &g);
    Ok((g, norm2))
}

fn m_inner(problem: &KsProblem, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    apply_block(&problem.mass, b).dot(a)
}

/// Steepest descent on the constraint set with Armijo backtracking from a
/// Barzilai-Borwein trial step; Gram-Schmidt retraction.
pub fn direct_minimize(problem: &KsProblem, start: &OrbitalSet, opts: &DirectOptions) -> Result<GroundState> {
    if start.n_orbitals() != problem.n_orbitals() {
        return Err(Error::InvalidInput(
            "start block has the wrong number of orbitals".into(),
        ));
    }
    let mut phi = problem.orthonormalize(&start.coeffs)?;
    let mut energy = problem.energy(&phi)?;
    let (mut g, mut gnorm2) = projected_gradient(problem, &phi)?;
    let mut step = 0.1;
    let mut history = vec![ScfStep {
        iteration: 0,
        density_residual: gnorm2.sqrt(),
        energy,
        eig_iterations: 0,
    }];
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    for it in 1..=opts.max_iter {
        if gnorm2.sqrt() <= opts.tol {
            return GroundState::assemble(problem, phi, history, true, it - 1, Method::DirectMinimization);
        }
        if let Some((dx, dg)) = &prev {
            let sy = m_inner(problem, dx, dg);
            let ss = m_inner(problem, dx, dx);
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-6, 1e3);
            }
        }
        let mut tau = step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = problem.orthonormalize(&(&phi.coeffs - &g * tau))?;
            let e = problem.energy(&trial)?;
            if e <= energy - opts.armijo * tau * gnorm2 {
                accepted = Some((trial, e));
                break;
            }
            tau *= 0.5;
        }
        let Some((next, e)) = accepted else {
            // no decrease is measurable at round-off level: accept stationarity
            if gnorm2.sqrt() <= 1e3 * opts.tol {
                return GroundState::assemble(problem, phi, history, true, it - 1, Method::DirectMinimization);
            }
            return Err(Error::LineSearch {
                halvings: opts.max_halvings,
            });
        };
        let (g_next, gn2) = projected_gradient(problem, &next)?;
        prev = Some((&next.coeffs - &phi.coeffs, &g_next - &g));
        phi = next;
        energy = e;
        g = g_next;
        gnorm2 = gn2;
        history.push(ScfStep {
            iteration: it,
            density_residual: gnorm2.sqrt(),
            energy,
            eig_iterations: 0,
        });
    }
    log::warn!(
        "direct minimization stopped at the iteration cap, gradient {:.3e}",
        gnorm2.sqrt()
    );
    GroundState::assemble(problem, phi, history, false, opts.max_iter, Method::DirectMinimization)
}
