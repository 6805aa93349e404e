use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::space::FeSpace;
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::sparse::{dot, CsrMatrix};

/// A function of the space: free-dof coefficients, zero trace on the boundary.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_dofs();
        Self {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn evaluate(&self, x: &Point) -> (f64, Point) {
        self.space.evaluate(&self.coeffs, x)
    }
}

/// Nodal interpolant of `f` (P1/P2 Lagrange interpolation at the dofs).
pub fn project_function<F: Fn(&Point) -> f64>(space: &Arc<FeSpace>, f: F) -> Result<FeFunction> {
    let coeffs = space.interpolate(f)?;
    FeFunction::new(space.clone(), coeffs)
}

/// `(||u - v||_0, ||u - v||_1)` with `||e||_1^2 = e^T (M + K) e`.
pub fn norms(mass: &CsrMatrix, stiffness: &CsrMatrix, u: &FeFunction, v: &FeFunction) -> Result<(f64, f64)> {
    if !Arc::ptr_eq(&u.space, &v.space) && !u.space.same_as(&v.space) {
        return Err(Error::SpaceMismatch("norms of functions from different spaces".into()));
    }
    let e: Vec<f64> = u.coeffs.iter().zip(&v.coeffs).map(|(a, b)| a - b).collect();
    let l2 = dot(&e, &mass.matvec(&e)).max(0.0);
    let h1 = l2 + dot(&e, &stiffness.matvec(&e)).max(0.0);
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Electron density sampled at every field quadrature point of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn zeros(space: &FeSpace) -> Self {
        Self {
            values: vec![0.0; space.n_qp()],
        }
    }

    /// `rho = sum_i |phi_i|^2` for a block with one orbital per column.
    pub fn from_orbitals(space: &FeSpace, block: &DMatrix<f64>) -> Self {
        assert_eq!(block.nrows(), space.n_dofs());
        let nq = space.qp_per_element();
        let nloc = space.local_dofs();
        let basis = space.field_basis();
        let mut values = vec![0.0; space.n_qp()];
        values.par_chunks_mut(nq).enumerate().for_each(|(t, chunk)| {
            for col in block.column_iter() {
                let local = space.local_coeffs(t, col.as_slice());
                for (q, v) in chunk.iter_mut().enumerate() {
                    let b = &basis[q];
                    let phi: f64 = (0..nloc).map(|a| local[a] * b[a]).sum();
                    *v += phi * phi;
                }
            }
        });
        Self { values }
    }

    pub fn integral(&self, weights: &[f64]) -> f64 {
        dot(&self.values, weights)
    }

    /// `sqrt(int (self - other)^2)`.
    pub fn l2_distance(&self, other: &Self, weights: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_space(&self, space: &FeSpace) -> Result<()> {
        if self.values.len() != space.n_qp() {
            return Err(Error::SpaceMismatch(format!(
                "density has {} samples, space has {} quadrature points",
                self.values.len(),
                space.n_qp()
            )));
        }
        Ok(())
    }
}
