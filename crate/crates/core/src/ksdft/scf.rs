use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::problem::{KsProblem, OrbitalSet};
use crate::error::{Error, Result};
use crate::fem::DensityField;
use crate::mesh::Point;
use crate::sparse::{eigensolve, random_block, LobpcgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    Linear { beta: f64 },
    Anderson { depth: usize, beta: f64 },
}

impl Mixing {
    fn beta(&self) -> f64 {
        match *self {
            Mixing::Linear { beta } | Mixing::Anderson { beta, .. } => beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGuess {
    AtomicGaussian,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfConfig {
    pub mixing: Mixing,
    /// Bound on `||ρ_out - ρ_in||_0`.
    pub density_tol: f64,
    pub max_iter: usize,
    /// Relative eigenpair residual of the final eigensolve.
    pub eig_tol: f64,
    pub eig_maxit: usize,
    pub initial_guess: InitialGuess,
    /// Seed of the eigensolver's restart directions.
    pub seed: u64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            mixing: Mixing::Linear { beta: 0.3 },
            density_tol: 1e-9,
            max_iter: 200,
            eig_tol: 1e-10,
            eig_maxit: 5000,
            initial_guess: InitialGuess::AtomicGaussian,
            seed: 0x5eed,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        let beta = self.mixing.beta();
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "mixing beta must lie in (0, 1], got {beta}"
            )));
        }
        if let Mixing::Anderson { depth: 0, .. } = self.mixing {
            return Err(Error::InvalidInput("Anderson depth must be at least 1".into()));
        }
        if !(self.density_tol > 0.0 && self.eig_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iter == 0 || self.eig_maxit == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScfStep {
    pub iteration: usize,
    pub density_residual: f64,
    pub energy: f64,
    pub eig_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Scf,
    DirectMinimization,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub orbitals: OrbitalSet,
    /// `Λ_ij = φ_jᵀ A_Φ φ_i`.
    pub multipliers: DMatrix<f64>,
    /// Eigenvalues of `Λ`, ascending.
    pub eigenvalues: Vec<f64>,
    pub total_energy: f64,
    pub scf_history: Vec<ScfStep>,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
}

impl GroundState {
    pub(crate) fn assemble(
        problem: &KsProblem,
        orbitals: OrbitalSet,
        history: Vec<ScfStep>,
        converged: bool,
        iterations: usize,
        method: Method,
    ) -> Result<Self> {
        let multipliers = problem.lagrange_multipliers(&orbitals)?;
        let total_energy = problem.energy(&orbitals)?;
        Ok(Self {
            eigenvalues: sorted_eigenvalues(&multipliers),
            orbitals,
            multipliers,
            total_energy,
            scf_history: history,
            converged,
            iterations,
            method,
        })
    }

    pub fn density_residual(&self) -> f64 {
        self.scf_history.last().map_or(f64::NAN, |s| s.density_residual)
    }
}

pub(crate) fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Normalized s and p Gaussians at every nucleus (the origin if there are
/// none), enough for `count` columns.
fn gaussian_block(problem: &KsProblem, count: usize) -> DMatrix<f64> {
    let mut centers: Vec<Point> = problem.system.pseudo.nuclei.iter().map(|n| n.position).collect();
    if centers.is_empty() {
        centers.push([0.0; 3]);
    }
    let width2 = 1.5f64;
    let coords = problem.space.dof_coords();
    let mut cols = Vec::new();
    'outer: for shell in 0..4 {
        for c in &centers {
            if cols.len() == count {
                break 'outer;
            }
            cols.push(
                coords
                    .iter()
                    .map(|x| {
                        let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
                        let g = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / width2).exp();
                        if shell == 0 {
                            g
                        } else {
                            d[shell - 1] * g
                        }
                    })
                    .collect::<Vec<f64>>(),
            );
        }
    }
    // more orbitals than shells: pad with deterministic pseudo-random columns
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a55);
    let n = coords.len();
    let mut block = random_block(n, count, &mut rng);
    for (j, c) in cols.into_iter().enumerate() {
        block.set_column(j, &DVector::from_vec(c));
    }
    block
}

pub fn initial_orbitals(problem: &KsProblem, guess: InitialGuess, count: usize) -> Result<OrbitalSet> {
    let block = match guess {
        InitialGuess::AtomicGaussian => gaussian_block(problem, count),
        InitialGuess::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_block(problem.space.n_dofs(), count, &mut rng)
        }
    };
    problem.orthonormalize(&block)
}

struct Anderson {
    depth: usize,
    inputs: Vec<Vec<f64>>,
    residuals: Vec<Vec<f64>>,
}

impl Anderson {
    fn next(&mut self, rho_in: &[f64], residual: &[f64], beta: f64, weights: &[f64]) -> Vec<f64> {
        self.inputs.push(rho_in.to_vec());
        self.residuals.push(residual.to_vec());
        if self.inputs.len() > self.depth {
            self.inputs.remove(0);
            self.residuals.remove(0);
        }
        let m = self.inputs.len();
        // minimize |Σ c_k F_k| subject to Σ c_k = 1 via the bordered normal equations
        let mut a = DMatrix::zeros(m + 1, m + 1);
        let mut b = DVector::zeros(m + 1);
        for i in 0..m {
            for j in 0..=i {
                let g: f64 = weights
                    .iter()
                    .zip(&self.residuals[i])
                    .zip(&self.residuals[j])
                    .map(|((w, x), y)| w * x * y)
                    .sum();
                a[(i, j)] = g;
                a[(j, i)] = g;
            }
            a[(i, m)] = 1.0;
            a[(m, i)] = 1.0;
        }
        b[m] = 1.0;
        let scale = (0..m).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..m {
            a[(i, i)] += 1e-12 * scale;
        }
        let coef = match a.lu().solve(&b) {
            Some(c) => c,
            None => {
                let mut c = DVector::zeros(m + 1);
                c[m - 1] = 1.0;
                c
            }
        };
        let mut out = vec![0.0; rho_in.len()];
        for k in 0..m {
            for ((o, x), f) in out.iter_mut().zip(&self.inputs[k]).zip(&self.residuals[k]) {
                *o += coef[k] * (x + beta * f);
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }
}

/// Self-consistent field iteration with aufbau occupation of the lowest `N`
/// eigenvectors. An unconverged run is returned with `converged = false`.
/// Extra LOBPCG columns beyond the `N + 1` wanted pairs; they keep a nearby
/// eigenvalue cluster from stalling the last wanted pair.
const GUARD_VECTORS: usize = 2;

pub fn scf_solve(problem: &KsProblem, cfg: &ScfConfig) -> Result<GroundState> {
    scf_solve_from(problem, cfg, None)
}

pub fn scf_solve_from(problem: &KsProblem, cfg: &ScfConfig, start: Option<&OrbitalSet>) -> Result<GroundState> {
    cfg.validate()?;
    let n = problem.n_orbitals();
    let nev = n + 1;
    let block = nev + GUARD_VECTORS;
    let start_block = match start {
        Some(phi) => {
            problem_check(problem, phi)?;
            let mut b = initial_orbitals(problem, cfg.initial_guess, block)?.coeffs;
            for j in 0..n {
                b.set_column(j, &phi.coeffs.column(j));
            }
            problem.orthonormalize(&b)?
        }
        None => initial_orbitals(problem, cfg.initial_guess, block)?,
    };
    let mut x = start_block.coeffs.clone();
    let mut rho_in = DensityField::from_orbitals(&problem.space, &x.columns(0, n).clone_owned());
    let weights = problem.weights();
    let mut history = Vec::new();
    let mut anderson = match cfg.mixing {
        Mixing::Anderson { depth, .. } => Some(Anderson {
            depth,
            inputs: Vec::new(),
            residuals: Vec::new(),
        }),
        Mixing::Linear { .. } => None,
    };
    let linear = problem.system.is_linear();
    // a supplied start is taken to be near self-consistent: solve tightly from the outset
    let mut last_residual = if start.is_some() { 0.0 } else { f64::INFINITY };
    let mut orbitals = start_block;

    for it in 1..=cfg.max_iter {
        let h = problem.hamiltonian(&rho_in)?;
        // loose eigensolves while the density is far from self-consistent
        let tol = if linear {
            cfg.eig_tol
        } else {
            cfg.eig_tol.max((1e-2 * last_residual).min(1e-4))
        };
        let opts = LobpcgOptions {
            tol,
            maxit: cfg.eig_maxit,
            precondition: true,
            seed: cfg.seed,
            wanted: nev,
        };
        let eig = eigensolve(&h, &problem.mass, &x, &opts)?;
        x = eig.vectors.clone();
        orbitals = OrbitalSet {
            space: problem.space.clone(),
            coeffs: eig.vectors.columns(0, n).clone_owned(),
        };
        let rho_out = problem.density(&orbitals);
        let residual_vec: Vec<f64> = rho_out.values.iter().zip(&rho_in.values).map(|(a, b)| a - b).collect();
        let residual = rho_out.l2_distance(&rho_in, weights);
        let energy = problem.energy(&orbitals)?;
        history.push(ScfStep {
            iteration: it,
            density_residual: if linear { 0.0 } else { residual },
            energy,
            eig_iterations: eig.iterations,
        });
        log::debug!("scf {it}: residual {residual:.3e} energy {energy:.12} eig tol {tol:.1e}");
        if linear || (residual <= cfg.density_tol && tol <= cfg.eig_tol) {
            check_fermi_gap(&eig.values, n)?;
            return GroundState::assemble(problem, orbitals, history, true, it, Method::Scf);
        }
        last_residual = residual;
        rho_in = match anderson.as_mut() {
            Some(acc) => DensityField {
                values: acc.next(&rho_in.values, &residual_vec, cfg.mixing.beta(), weights),
            },
            None => {
                let beta = cfg.mixing.beta();
                DensityField {
                    values: rho_in
                        .values
                        .iter()
                        .zip(&rho_out.values)
                        .map(|(a, b)| a + beta * (b - a))
                        .collect(),
                }
            }
        };
    }
    log::warn!(
        "scf did not converge in {} iterations (residual {last_residual:.3e})",
        cfg.max_iter
    );
    GroundState::assemble(problem, orbitals, history, false, cfg.max_iter, Method::Scf)
}

fn problem_check(problem: &KsProblem, phi: &OrbitalSet) -> Result<()> {
    problem.check_orbitals(phi)?;
    if phi.n_orbitals() != problem.n_orbitals() {
        return Err(Error::InvalidInput(format!(
            "start has {} orbitals, system needs {}",
            phi.n_orbitals(),
            problem.n_orbitals()
        )));
    }
    Ok(())
}

fn check_fermi_gap(values: &[f64], n: usize) -> Result<()> {
    let (occ, unocc) = (values[n - 1], values[n]);
    if unocc - occ <= 1e-8 * occ.abs().max(1.0) {
        return Err(Error::FermiDegeneracy {
            occupied: occ,
            unoccupied: unocc,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AufbauReport {
    /// Lowest `N + 2` eigenvalues of `A_Φ`.
    pub spectrum: Vec<f64>,
    pub occupied: Vec<f64>,
    pub satisfied: bool,
}

/// Checks that the occupied orbitals span the lowest `N` eigenvectors of `A_Φ`.
pub fn aufbau_audit(problem: &KsProblem, gs: &GroundState, tol: f64) -> Result<AufbauReport> {
    let n = gs.orbitals.n_orbitals();
    let h = problem.hamiltonian_of(&gs.orbitals)?;
    let mut x0 = initial_orbitals(problem, InitialGuess::AtomicGaussian, n + 2 + GUARD_VECTORS)?.coeffs;
    for j in 0..n {
        x0.set_column(j, &gs.orbitals.coeffs.column(j));
    }
    let x0 = problem.orthonormalize(&x0)?.coeffs;
    let eig = eigensolve(
        &h,
        &problem.mass,
        &x0,
        &LobpcgOptions {
            tol: 1e-10,
            maxit: 5000,
            wanted: n + 2,
            ..Default::default()
        },
    )?;
    let spectrum = eig.values[..n + 2].to_vec();
    let max_occ = gs.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let below = spectrum.iter().filter(|&&l| l < max_occ - tol).count();
    let matches = spectrum[..n]
        .iter()
        .zip(&gs.eigenvalues)
        .all(|(a, b)| (a - b).abs() <= tol);
    Ok(AufbauReport {
        spectrum,
        occupied: gs.eigenvalues.clone(),
        satisfied: below < n && matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{diatomic, free_box, oscillator};

    #[test]
    fn linear_converges_in_one_iteration() {
        let p = KsProblem::uniform(free_box(), 6, 1).unwrap();
        let gs = scf_solve(&p, &ScfConfig::default()).unwrap();
        assert!(gs.converged);
        assert_eq!(gs.iterations, 1);
        // P1 on a coarse mesh overestimates 3/2
        assert!(gs.total_energy > 1.5 && gs.total_energy < 2.0, "{}", gs.total_energy);
        assert!((gs.eigenvalues[0] - gs.total_energy).abs() < 1e-10);
    }

    #[test]
    fn oscillator_lowest_eigenvalue() {
        let p = KsProblem::uniform(oscillator(), 12, 2).unwrap();
        let gs = scf_solve(&p, &ScfConfig::default()).unwrap();
        assert!((gs.eigenvalues[0] - 1.5).abs() < 0.1, "{:?}", gs.eigenvalues);
    }

    #[test]
    fn diatomic_converges_and_restarts() {
        let p = KsProblem::uniform(diatomic(), 6, 1).unwrap();
        let cfg = ScfConfig::default();
        let gs = scf_solve(&p, &cfg).unwrap();
        assert!(gs.converged, "{:?}", gs.scf_history.last());
        assert!(gs.density_residual() < 1e-7);
        assert!((&gs.multipliers - gs.multipliers.transpose()).amax() < 1e-9);
        assert!((p.energy(&gs.orbitals).unwrap() - gs.total_energy).abs() <= 1e-12 * gs.total_energy.abs());
        let rho = p.density(&gs.orbitals);
        let charge = rho.integral(p.weights());
        assert!((charge - 2.0).abs() < 1e-8 * 2.0);

        let again = scf_solve_from(&p, &cfg, Some(&gs.orbitals)).unwrap();
        assert_eq!(again.iterations, 1);
        assert!((again.total_energy - gs.total_energy).abs() < 1e-12 * gs.total_energy.abs().max(1.0));

        let audit = aufbau_audit(&p, &gs, 1e-7).unwrap();
        assert!(audit.satisfied, "{audit:?}");

        let anderson = ScfConfig {
            mixing: Mixing::Anderson { depth: 5, beta: 0.3 },
            ..cfg.clone()
        };
        let ga = scf_solve(&p, &anderson).unwrap();
        assert!(ga.converged);
        assert!(ga.iterations <= gs.iterations);
        assert!((ga.total_energy - gs.total_energy).abs() < 1e-9 * gs.total_energy.abs());
    }

    #[test]
    fn density_invariant_under_rotated_start() {
        let p = KsProblem::uniform(diatomic(), 4, 1).unwrap();
        let cfg = ScfConfig::default();
        let gs = scf_solve(&p, &cfg).unwrap();
        let start = initial_orbitals(&p, InitialGuess::Random { seed: 3 }, 2).unwrap();
        let u = nalgebra::Rotation2::new(0.7).matrix().clone_owned();
        let rotated = start.rotate(&DMatrix::from_column_slice(2, 2, u.as_slice()));
        let gr = scf_solve_from(&p, &cfg, Some(&rotated)).unwrap();
        let d = p
            .density(&gs.orbitals)
            .l2_distance(&p.density(&gr.orbitals), p.weights());
        assert!(d < 10.0 * cfg.density_tol, "{d}");
    }

    #[test]
    fn config_validation() {
        let mut c = ScfConfig::default();
        assert!(c.validate().is_ok());
        c.mixing = Mixing::Linear { beta: 0.0 };
        assert!(c.validate().is_err());
        c.mixing = Mixing::Anderson { depth: 0, beta: 0.5 };
        assert!(c.validate().is_err());
        let c = ScfConfig {
            density_tol: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
