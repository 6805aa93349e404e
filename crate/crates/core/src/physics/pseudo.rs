//! Analytic pseudopotentials: erf-screened local part and separable
//! Gaussian projectors.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{load_vector, FeSpace};
use crate::mesh::{dist, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nucleus {
    pub position: Point,
    /// Valence charge.
    pub charge: f64,
    pub core_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    S,
    Px,
    Py,
    Pz,
}

/// `zeta(x) = sqrt(strength) * g(x - center)` with `g` an L2-normalized
/// Gaussian of width `width` (`exp(-r^2 / width^2)`), times `x_k` for p-type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projector {
    pub center: Point,
    pub width: f64,
    pub strength: f64,
    pub kind: ProjectorKind,
}

impl Projector {
    pub fn value(&self, x: &Point) -> f64 {
        let w2 = self.width * self.width;
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let base = (2.0 / (PI * w2)).powf(0.75);
        let g = (-r2 / w2).exp();
        let amp = self.strength.sqrt();
        match self.kind {
            ProjectorKind::S => amp * base * g,
            ProjectorKind::Px | ProjectorKind::Py | ProjectorKind::Pz => {
                let k = match self.kind {
                    ProjectorKind::Px => 0,
                    ProjectorKind::Py => 1,
                    _ => 2,
                };
                amp * base * (4.0 / w2).sqrt() * d[k] * g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PseudoSpec {
    pub nuclei: Vec<Nucleus>,
    #[serde(default)]
    pub projectors: Vec<Projector>,
    /// Adds `confinement * |x|^2 / 2` to the local potential.
    #[serde(default)]
    pub confinement: f64,
}

impl PseudoSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nuclei.iter().enumerate() {
            if !(n.core_radius.is_finite() && n.core_radius > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "nucleus {i}: core radius must be positive"
                )));
            }
            if !n.charge.is_finite() || n.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("nucleus {i}: non-finite parameters")));
            }
        }
        for (i, p) in self.projectors.iter().enumerate() {
            if !(p.width.is_finite() && p.width > 0.0) {
                return Err(Error::InvalidInput(format!("projector {i}: width must be positive")));
            }
            if !(p.strength.is_finite() && p.strength >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "projector {i}: strength must be non-negative"
                )));
            }
            if p.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("projector {i}: non-finite center")));
            }
        }
        if !(self.confinement.is_finite() && self.confinement >= 0.0) {
            return Err(Error::InvalidInput("confinement must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_charge(&self) -> f64 {
        self.nuclei.iter().map(|n| n.charge).sum()
    }
}

/// `-Z erf(r / r_c) / r`, with the limit `-2Z / (sqrt(pi) r_c)` at `r = 0`.
pub fn screened_coulomb(charge: f64, core_radius: f64, r: f64) -> f64 {
    let s = r / core_radius;
    if s < 1e-4 {
        // erf(s)/s = 2/sqrt(pi) (1 - s^2/3 + s^4/10)
        let s2 = s * s;
        -charge * 2.0 / (PI.sqrt() * core_radius) * (1.0 - s2 / 3.0 + s2 * s2 / 10.0)
    } else {
        -charge * libm::erf(s) / r
    }
}

pub fn local_potential_at(spec: &PseudoSpec, x: &Point) -> f64 {
    let mut v: f64 = spec
        .nuclei
        .iter()
        .map(|n| screened_coulomb(n.charge, n.core_radius, dist(x, &n.position)))
        .sum();
    if spec.confinement != 0.0 {
        v += 0.5 * spec.confinement * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    }
    v
}

/// Nonlocal part `V_nl = sum_j z_j z_j^T` on the free dofs of a space.
#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    /// One load vector `z_j = (zeta_j, b_i)` per column.
    pub loads: DMatrix<f64>,
}

impl NonlocalOperator {
    pub fn new(spec: &PseudoSpec, space: &FeSpace) -> Self {
        let pts = space.qp_points();
        let n = space.n_dofs();
        let mut loads = DMatrix::zeros(n, spec.projectors.len());
        for (j, p) in spec.projectors.iter().enumerate() {
            let f: Vec<f64> = pts.iter().map(|x| p.value(x)).collect();
            loads.set_column(j, &nalgebra::DVector::from_vec(load_vector(space, &f)));
        }
        Self { loads }
    }

    pub fn rank(&self) -> usize {
        self.loads.ncols()
    }

    /// `(phi_i, zeta_j)` for every column `i` of `block`, as an `N x M` matrix.
    pub fn overlaps(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        block.transpose() * &self.loads
    }

    /// `sum_j (phi_i, zeta_j) z_j` for every column of `block`.
    pub fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(block.nrows(), block.ncols());
        }
        &self.loads * (self.loads.transpose() * block)
    }

    pub fn apply_vec(&self, x: &[f64], y: &mut [f64]) {
        for z in self.loads.column_iter() {
            let c: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum();
            for (yi, zi) in y.iter_mut().zip(z.iter()) {
                *yi += c * zi;
            }
        }
    }

    /// `sum_ij (phi_i, zeta_j)^2`.
    pub fn energy(&self, block: &DMatrix<f64>) -> f64 {
        self.overlaps(block).norm_squared()
    }
}

pub fn apply_nonlocal(spec: &PseudoSpec, space: &FeSpace, block: &DMatrix<f64>) -> DMatrix<f64> {
    NonlocalOperator::new(spec, space).apply(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(z: f64, rc: f64, at: Point) -> PseudoSpec {
        PseudoSpec {
            nuclei: vec![Nucleus {
                position: at,
                charge: z,
                core_radius: rc,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn screened_values() {
        let s = one(1.0, 1.0, [0.0; 3]);
        let v = local_potential_at(&s, &[3.0, 0.0, 0.0]);
        assert!((v + libm::erf(3.0) / 3.0).abs() < 1e-15);
        assert!((v + 0.333_326).abs() < 1e-6);
        let v0 = local_potential_at(&s, &[0.0; 3]);
        assert!((v0 + std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-15);
        // continuity across the series switch
        let a = screened_coulomb(1.0, 1.0, 0.99999e-4);
        let b = screened_coulomb(1.0, 1.0, 1.00001e-4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn far_field_is_coulombic() {
        let s = one(2.0, 0.5, [0.0; 3]);
        let v = local_potential_at(&s, &[0.0, 8.0, 0.0]);
        assert!((v + 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn superposition() {
        let mut s = one(1.0, 1.0, [-1.0, 0.0, 0.0]);
        s.nuclei.push(Nucleus {
            position: [1.0, 0.0, 0.0],
            charge: 1.0,
            core_radius: 1.0,
        });
        let single = screened_coulomb(1.0, 1.0, 1.0);
        assert_eq!(local_potential_at(&s, &[0.0; 3]), 2.0 * single);
    }

    #[test]
    fn projector_normalization() {
        // midpoint sum on a fine lattice approximates the L2 norm
        for kind in [ProjectorKind::S, ProjectorKind::Py] {
            let p = Projector {
                center: [0.2, 0.0, -0.1],
                width: 0.8,
                strength: 2.5,
                kind,
            };
            let h = 0.05;
            let mut s = 0.0;
            for i in -80..80 {
                for j in -80..80 {
                    for k in -80..80 {
                        let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                        s += p.value(&x).powi(2) * h * h * h;
                    }
                }
            }
            assert!((s - 2.5).abs() < 1e-6, "{kind:?}: {s}");
        }
    }

    fn space_and_projectors() -> (FeSpace, PseudoSpec) {
        let space = FeSpace::new(Mesh::uniform(3.0, 4).unwrap(), 1).unwrap();
        let mut spec = PseudoSpec::default();
        spec.projectors.push(Projector {
            center: [0.0; 3],
            width: 1.0,
            strength: 1.0,
            kind: ProjectorKind::S,
        });
        spec.projectors.push(Projector {
            center: [0.5, 0.0, 0.0],
            width: 0.7,
            strength: 0.3,
            kind: ProjectorKind::Pz,
        });
        (space, spec)
    }

    #[test]
    fn nonlocal_zero_cases() {
        let (space, spec) = space_and_projectors();
        let empty = NonlocalOperator::new(&PseudoSpec::default(), &space);
        let x = DMatrix::from_element(space.n_dofs(), 2, 1.0);
        assert_eq!(empty.apply(&x).norm(), 0.0);

        // a vector orthogonal (in the Euclidean load sense) to z_1 only
        let mut single = spec.clone();
        single.projectors.truncate(1);
        let op = NonlocalOperator::new(&single, &space);
        let z = op.loads.column(0).clone_owned();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = nalgebra::DVector::from_fn(space.n_dofs(), |_, _| rng.random_range(-1.0..1.0));
        v -= &z * (z.dot(&v) / z.dot(&z));
        let out = op.apply(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        assert!(out.norm() < 1e-14 * z.norm());
    }

    #[test]
    fn nonlocal_symmetric_psd() {
        let (space, spec) = space_and_projectors();
        let op = NonlocalOperator::new(&spec, &space);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let phi = DMatrix::from_fn(space.n_dofs(), 1, |_, _| rng.random_range(-1.0..1.0));
            let psi = DMatrix::from_fn(space.n_dofs(), 1, |_, _| rng.random_range(-1.0..1.0));
            let q = phi.dot(&op.apply(&phi));
            assert!(q >= 0.0);
            assert!((q - op.energy(&phi)).abs() < 1e-12 * q.max(1e-300));
            let a = psi.dot(&op.apply(&phi));
            let b = phi.dot(&op.apply(&psi));
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn validation() {
        assert!(one(1.0, 0.0, [0.0; 3]).validate().is_err());
        assert!(one(1.0, 1.0, [0.0; 3]).validate().is_ok());
    }
}
