use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, assemble_weighted_mass, DensityField, FeSpace};
use crate::mesh::Mesh;
use crate::physics::{local_potential_at, HartreeSolution, HartreeSolver, ModelSystem, NonlocalOperator};
use crate::sparse::{apply_block, CsrMatrix, SymmetricOperator};

/// `N` orbitals as the columns of an `n_dofs x N` block, `ΦᵀMΦ = I`.
#[derive(Debug, Clone)]
pub struct OrbitalSet {
    pub space: Arc<FeSpace>,
    pub coeffs: DMatrix<f64>,
}

impl OrbitalSet {
    pub fn n_orbitals(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `max |ΦᵀMΦ - I|`.
    pub fn orthonormality_error(&self, mass: &CsrMatrix) -> f64 {
        let g = self.coeffs.transpose() * apply_block(mass, &self.coeffs);
        let n = g.nrows();
        (g - DMatrix::identity(n, n)).amax()
    }

    /// `ΦU` for an `N x N` matrix `U`.
    pub fn rotate(&self, u: &DMatrix<f64>) -> Self {
        Self {
            space: self.space.clone(),
            coeffs: &self.coeffs * u,
        }
    }
}

/// Modified Gram-Schmidt in the `M` inner product, applied twice.
pub fn orthonormalize(space: &Arc<FeSpace>, mass: &CsrMatrix, block: &DMatrix<f64>) -> Result<OrbitalSet> {
    if block.nrows() != space.n_dofs() || mass.nrows() != space.n_dofs() {
        return Err(Error::SpaceMismatch(format!(
            "block has {} rows, space has {} dofs",
            block.nrows(),
            space.n_dofs()
        )));
    }
    let mut q = block.clone();
    let k = q.ncols();
    for j in 0..k {
        let original = mass
            .quadratic_form(q.column(j).as_slice(), q.column(j).as_slice())
            .sqrt();
        for _pass in 0..2 {
            let mq = mass.matvec(q.column(j).as_slice());
            for i in 0..j {
                let c: f64 = q.column(i).iter().zip(&mq).map(|(a, b)| a * b).sum();
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-c, &qi, 1.0);
            }
        }
        let nrm = mass
            .quadratic_form(q.column(j).as_slice(), q.column(j).as_slice())
            .sqrt();
        if !(nrm > 1e-12 * original.max(f64::MIN_POSITIVE)) || !nrm.is_finite() || nrm < 1e-300 {
            return Err(Error::RankDeficient { column: j, norm: nrm });
        }
        q.column_mut(j).scale_mut(1.0 / nrm);
    }
    Ok(OrbitalSet {
        space: space.clone(),
        coeffs: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub kinetic: f64,
    pub local: f64,
    pub nonlocal: f64,
    pub hartree: f64,
    pub xc: f64,
    pub total: f64,
}

/// `A = K/2 + W(v) + Σ z_j z_jᵀ`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub matrix: CsrMatrix,
    pub nonlocal: Arc<NonlocalOperator>,
}

impl SymmetricOperator for Hamiltonian {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec_into(x, y);
        self.nonlocal.apply_vec(x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.matrix.diagonal();
        for z in self.nonlocal.loads.column_iter() {
            for (di, zi) in d.iter_mut().zip(z.iter()) {
                *di += zi * zi;
            }
        }
        d
    }
}

/// A model system discretized on one finite-element space.
#[derive(Debug)]
pub struct KsProblem {
    pub system: ModelSystem,
    pub space: Arc<FeSpace>,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub nonlocal: Arc<NonlocalOperator>,
    pub hartree: Option<HartreeSolver>,
    pub(crate) weights: Vec<f64>,
    pub(crate) vloc: Vec<f64>,
    /// `K/2 + W(V_loc)`, the density-independent part.
    pub(crate) core: CsrMatrix,
}

impl KsProblem {
    pub fn new(system: ModelSystem, space: Arc<FeSpace>) -> Result<Self> {
        system.validate()?;
        if (space.mesh().half_width() - system.half_width).abs() > 1e-12 * system.half_width {
            return Err(Error::InvalidInput(format!(
                "mesh half-width {} differs from the system's {}",
                space.mesh().half_width(),
                system.half_width
            )));
        }
        if space.n_dofs() < 3 * (system.n_orbitals + 2) {
            return Err(Error::InvalidInput(format!(
                "{} orbitals need more than {} degrees of freedom",
                system.n_orbitals,
                space.n_dofs()
            )));
        }
        let stiffness = assemble_stiffness(&space);
        let mass = assemble_mass(&space);
        let vloc: Vec<f64> = space
            .qp_points()
            .iter()
            .map(|x| local_potential_at(&system.pseudo, x))
            .collect();
        let core = stiffness.linear_combination(0.5, &assemble_weighted_mass(&space, &vloc)?, 1.0);
        let nonlocal = Arc::new(NonlocalOperator::new(&system.pseudo, &space));
        let hartree = if system.hartree {
            Some(HartreeSolver::new(space.clone(), system.boundary_rule)?)
        } else {
            None
        };
        Ok(Self {
            weights: space.qp_weights(),
            system,
            space,
            stiffness,
            mass,
            nonlocal,
            hartree,
            vloc,
            core,
        })
    }

    /// Uniform mesh with `cells` per axis on the system's box.
    pub fn uniform(system: ModelSystem, cells: usize, degree: usize) -> Result<Self> {
        let mesh = Mesh::uniform(system.half_width, cells)?;
        let space = Arc::new(FeSpace::new(mesh, degree)?);
        Self::new(system, space)
    }

    pub fn n_orbitals(&self) -> usize {
        self.system.n_orbitals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn local_potential(&self) -> &[f64] {
        &self.vloc
    }

    pub fn orthonormalize(&self, block: &DMatrix<f64>) -> Result<OrbitalSet> {
        orthonormalize(&self.space, &self.mass, block)
    }

    pub(crate) fn check_orbitals(&self, phi: &OrbitalSet) -> Result<()> {
        if !Arc::ptr_eq(&phi.space, &self.space) && !phi.space.same_as(&self.space) {
            return Err(Error::SpaceMismatch("orbitals live on a different space".into()));
        }
        if phi.coeffs.nrows() != self.space.n_dofs() {
            return Err(Error::SpaceMismatch(
                "orbital block has the wrong number of rows".into(),
            ));
        }
        Ok(())
    }

    pub fn density(&self, phi: &OrbitalSet) -> DensityField {
        DensityField::from_orbitals(&self.space, &phi.coeffs)
    }

    fn check_density(&self, rho: &DensityField) -> Result<()> {
        rho.check_space(&self.space)?;
        if let Some((index, &value)) = rho.values.iter().enumerate().find(|(_, &v)| v < -1e-12 || v.is_nan()) {
            return Err(Error::NegativeDensity { index, value });
        }
        Ok(())
    }

    pub fn hartree_solution(&self, rho: &DensityField) -> Result<Option<HartreeSolution>> {
        match &self.hartree {
            Some(h) => Ok(Some(h.solve(&rho.values)?)),
            None => Ok(None),
        }
    }

    pub fn energy_terms(&self, phi: &OrbitalSet) -> Result<EnergyTerms> {
        self.check_orbitals(phi)?;
        let drift = phi.orthonormality_error(&self.mass);
        if drift > 1e-8 {
            log::warn!("energy evaluated off the constraint set: |ΦᵀMΦ - I| = {drift:.3e}");
        }
        let rho = self.density(phi);
        self.check_density(&rho)?;
        let kinetic = 0.5
            * phi
                .coeffs
                .column_iter()
                .map(|c| self.stiffness.quadratic_form(c.as_slice(), c.as_slice()))
                .sum::<f64>();
        let local = weighted(&self.weights, &self.vloc, &rho.values);
        let nonlocal = self.nonlocal.energy(&phi.coeffs);
        let hartree = self.hartree_solution(&rho)?.map_or(0.0, |h| h.energy);
        let xc = if self.system.xc.is_none() {
            0.0
        } else {
            let f = self.system.xc;
            self.weights
                .iter()
                .zip(&rho.values)
                .map(|(w, &t)| w * f.e0(t.max(0.0)))
                .sum()
        };
        Ok(EnergyTerms {
            kinetic,
            local,
            nonlocal,
            hartree,
            xc,
            total: kinetic + local + nonlocal + hartree + xc,
        })
    }

    pub fn energy(&self, phi: &OrbitalSet) -> Result<f64> {
        Ok(self.energy_terms(phi)?.total)
    }

    /// Effective potential `V_loc + V_H + E'(ρ)` at the field points.
    pub fn effective_potential(&self, rho: &DensityField) -> Result<Vec<f64>> {
        self.check_density(rho)?;
        let mut v = vec![0.0; self.weights.len()];
        if let Some(h) = self.hartree_solution(rho)? {
            v.copy_from_slice(&h.symmetric_potential);
        }
        if !self.system.xc.is_none() {
            let f = self.system.xc;
            for (vq, &t) in v.iter_mut().zip(&rho.values) {
                *vq += f.e1(t.max(0.0));
            }
        }
        Ok(v)
    }

    pub fn hamiltonian(&self, rho: &DensityField) -> Result<Hamiltonian> {
        let matrix = if self.system.is_linear() {
            self.core.clone()
        } else {
            let v = self.effective_potential(rho)?;
            self.core
                .linear_combination(1.0, &assemble_weighted_mass(&self.space, &v)?, 1.0)
        };
        Ok(Hamiltonian {
            matrix,
            nonlocal: self.nonlocal.clone(),
        })
    }

    pub fn hamiltonian_of(&self, phi: &OrbitalSet) -> Result<Hamiltonian> {
        self.check_orbitals(phi)?;
        self.hamiltonian(&self.density(phi))
    }

    /// `Λ_ij = φ_jᵀ A_Φ φ_i`.
    pub fn lagrange_multipliers(&self, phi: &OrbitalSet) -> Result<DMatrix<f64>> {
        let h = self.hamiltonian_of(phi)?;
        Ok(phi.coeffs.transpose() * apply_block(&h, &phi.coeffs))
    }
}

pub(crate) fn weighted(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}
