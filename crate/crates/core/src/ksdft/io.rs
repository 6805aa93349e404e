//! Versioned JSON form of a [`GroundState`].

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::problem::{KsProblem, OrbitalSet};
use super::scf::{GroundState, Method, ScfStep};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::physics::ModelSystem;

pub const GROUND_STATE_FORMAT: &str = "ksfem-ground-state";
pub const GROUND_STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateRecord {
    pub format: String,
    pub version: u32,
    pub system: ModelSystem,
    pub cells: usize,
    pub degree: usize,
    pub n_dofs: usize,
    /// One coefficient array per orbital.
    pub orbitals: Vec<Vec<f64>>,
    /// Row-major multiplier matrix.
    pub multipliers: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub total_energy: f64,
    pub scf_history: Vec<ScfStep>,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
}

impl GroundStateRecord {
    pub fn new(problem: &KsProblem, gs: &GroundState) -> Self {
        let n = gs.multipliers.nrows();
        Self {
            format: GROUND_STATE_FORMAT.into(),
            version: GROUND_STATE_VERSION,
            system: problem.system.clone(),
            cells: problem.space.mesh().cells_per_axis(),
            degree: problem.space.degree(),
            n_dofs: problem.space.n_dofs(),
            orbitals: gs
                .orbitals
                .coeffs
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            multipliers: (0..n)
                .map(|i| gs.multipliers.row(i).iter().copied().collect())
                .collect(),
            eigenvalues: gs.eigenvalues.clone(),
            total_energy: gs.total_energy,
            scf_history: gs.scf_history.clone(),
            converged: gs.converged,
            iterations: gs.iterations,
            method: gs.method,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and checks internal consistency; no space is needed.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(text)?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != GROUND_STATE_FORMAT {
            return Err(Error::InvalidInput(format!(
                "not a ground-state file: format {:?}",
                self.format
            )));
        }
        if self.version != GROUND_STATE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported ground-state version {} (expected {GROUND_STATE_VERSION})",
                self.version
            )));
        }
        self.system.validate()?;
        let n = self.orbitals.len();
        if n != self.system.n_orbitals {
            return Err(Error::InvalidInput(format!(
                "{n} orbitals stored, system declares {}",
                self.system.n_orbitals
            )));
        }
        if self.orbitals.iter().any(|o| o.len() != self.n_dofs) {
            return Err(Error::InvalidInput("orbital length differs from n_dofs".into()));
        }
        if self.multipliers.len() != n || self.multipliers.iter().any(|r| r.len() != n) || self.eigenvalues.len() != n {
            return Err(Error::InvalidInput(
                "multiplier dimensions do not match the orbital count".into(),
            ));
        }
        let finite = self
            .orbitals
            .iter()
            .flatten()
            .chain(self.multipliers.iter().flatten())
            .all(|v| v.is_finite());
        if !finite || !self.total_energy.is_finite() {
            return Err(Error::InvalidInput("non-finite values in ground state".into()));
        }
        if self.degree != 1 && self.degree != 2 || self.cells == 0 {
            return Err(Error::InvalidInput("invalid discretization".into()));
        }
        Ok(())
    }

    /// Rebuilds the ground state on `problem`, which must match the record.
    pub fn into_ground_state(self, problem: &KsProblem) -> Result<GroundState> {
        if self.system != problem.system {
            return Err(Error::InvalidInput("record was computed for a different system".into()));
        }
        self.into_ground_state_on(problem.space.clone())
    }

    /// Rebuilds the ground state on a bare space; enough for comparisons
    /// that never touch the Hamiltonian.
    pub fn into_ground_state_on(self, space: Arc<FeSpace>) -> Result<GroundState> {
        self.validate()?;
        if self.cells != space.mesh().cells_per_axis()
            || self.degree != space.degree()
            || self.n_dofs != space.n_dofs()
            || (space.mesh().half_width() - self.system.half_width).abs() > 1e-12 * self.system.half_width
        {
            return Err(Error::SpaceMismatch(format!(
                "record is for n={} P{}, space is n={} P{}",
                self.cells,
                self.degree,
                space.mesh().cells_per_axis(),
                space.degree()
            )));
        }
        let n = self.orbitals.len();
        let coeffs = DMatrix::from_fn(self.n_dofs, n, |i, j| self.orbitals[j][i]);
        let multipliers = DMatrix::from_fn(n, n, |i, j| self.multipliers[i][j]);
        Ok(GroundState {
            orbitals: OrbitalSet { space, coeffs },
            multipliers,
            eigenvalues: self.eigenvalues,
            total_energy: self.total_energy,
            scf_history: self.scf_history,
            converged: self.converged,
            iterations: self.iterations,
            method: self.method,
        })
    }
}
