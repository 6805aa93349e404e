use serde::{Deserialize, Serialize};

use super::hartree::BoundaryRule;
use super::pseudo::{Nucleus, Projector, ProjectorKind, PseudoSpec};
use super::xc::XcFunctional;
use crate::error::{Error, Result};

/// Everything that defines the energy functional apart from the discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSystem {
    pub name: String,
    /// Half-width `L` of the box `[-L, L]^3`.
    pub half_width: f64,
    /// Number of occupied orbitals.
    pub n_orbitals: usize,
    pub pseudo: PseudoSpec,
    pub xc: XcFunctional,
    pub hartree: bool,
    #[serde(default)]
    pub boundary_rule: BoundaryRule,
}

impl ModelSystem {
    pub fn validate(&self) -> Result<()> {
        if self.n_orbitals == 0 {
            return Err(Error::InvalidInput("n_orbitals must be at least 1".into()));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidInput("half_width must be positive".into()));
        }
        self.pseudo.validate()?;
        self.xc.validate()
    }

    /// No Hartree and no exchange-correlation: the Hamiltonian is fixed.
    pub fn is_linear(&self) -> bool {
        !self.hartree && self.xc.is_none()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "oscillator" => Ok(oscillator()),
            "free_box" => Ok(free_box()),
            "diatomic" => Ok(diatomic()),
            "tetrahedral" => Ok(tetrahedral()),
            _ => Err(Error::InvalidInput(format!(
                "unknown preset {name:?} (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }
}

pub const PRESETS: [&str; 4] = ["oscillator", "free_box", "diatomic", "tetrahedral"];

/// Harmonic well `|x|^2 / 2` on `[-10, 10]^3`, one orbital; eigenvalues 3/2, 5/2 (x3), ...
pub fn oscillator() -> ModelSystem {
    ModelSystem {
        name: "oscillator".into(),
        half_width: 10.0,
        n_orbitals: 1,
        pseudo: PseudoSpec {
            confinement: 1.0,
            ..Default::default()
        },
        xc: XcFunctional::None,
        hartree: false,
        boundary_rule: BoundaryRule::Multipole2,
    }
}

/// Free particle in `[-π/2, π/2]^3`; ground energy 3/2.
pub fn free_box() -> ModelSystem {
    ModelSystem {
        name: "free_box".into(),
        half_width: std::f64::consts::FRAC_PI_2,
        n_orbitals: 1,
        pseudo: PseudoSpec::default(),
        xc: XcFunctional::None,
        hartree: false,
        boundary_rule: BoundaryRule::Multipole2,
    }
}

pub const DIATOMIC_BOND: f64 = 2.0;

/// Two screened charges Z=2 (core radius 1.5) on the z axis in `[-3, 3]^3`,
/// two orbitals, Hartree plus Dirac exchange. Each site carries a weak s
/// projector and repulsive px/py projectors that push the pi states up and
/// leave a clear gap above the second orbital. The smooth cores and the small
/// box put the coarse study levels in the asymptotic range.
pub fn diatomic() -> ModelSystem {
    let half = 0.5 * DIATOMIC_BOND;
    let centers = [[0.0, 0.0, -half], [0.0, 0.0, half]];
    ModelSystem {
        name: "diatomic".into(),
        half_width: 3.0,
        n_orbitals: 2,
        pseudo: PseudoSpec {
            nuclei: centers
                .iter()
                .map(|&c| Nucleus {
                    position: c,
                    charge: 2.0,
                    core_radius: 1.5,
                })
                .collect(),
            projectors: centers
                .iter()
                .flat_map(|&c| {
                    [
                        (ProjectorKind::S, 0.5),
                        (ProjectorKind::Px, 2.0),
                        (ProjectorKind::Py, 2.0),
                    ]
                    .map(|(kind, strength)| Projector {
                        center: c,
                        width: 1.0,
                        strength,
                        kind,
                    })
                })
                .collect(),
            confinement: 0.0,
        },
        xc: XcFunctional::DiracExchange,
        hartree: true,
        boundary_rule: BoundaryRule::Multipole2,
    }
}

/// Central charge with four tetrahedral ligands; four orbitals, Hartree plus
/// LDA exchange-correlation.
pub fn tetrahedral() -> ModelSystem {
    let d = 1.6 / 3f64.sqrt();
    let ligands = [[d, d, d], [d, -d, -d], [-d, d, -d], [-d, -d, d]];
    let mut nuclei = vec![Nucleus {
        position: [0.0; 3],
        charge: 4.0,
        core_radius: 1.0,
    }];
    nuclei.extend(ligands.iter().map(|&p| Nucleus {
        position: p,
        charge: 1.0,
        core_radius: 0.6,
    }));
    let mut projectors = vec![Projector {
        center: [0.0; 3],
        width: 0.8,
        strength: 1.0,
        kind: ProjectorKind::S,
    }];
    for kind in [ProjectorKind::Px, ProjectorKind::Py, ProjectorKind::Pz] {
        projectors.push(Projector {
            center: [0.0; 3],
            width: 0.8,
            strength: 0.3,
            kind,
        });
    }
    ModelSystem {
        name: "tetrahedral".into(),
        half_width: 5.0,
        n_orbitals: 4,
        pseudo: PseudoSpec {
            nuclei,
            projectors,
            confinement: 0.0,
        },
        xc: XcFunctional::DiracPlusPz81,
        hartree: true,
        boundary_rule: BoundaryRule::Multipole2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for name in PRESETS {
            let s = ModelSystem::preset(name).unwrap();
            s.validate().unwrap();
            let json = serde_json::to_string(&s).unwrap();
            let back: ModelSystem = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
        assert!(ModelSystem::preset("nope").is_err());
        assert!(oscillator().is_linear() && !diatomic().is_linear());
    }

    #[test]
    fn tetrahedral_geometry() {
        let s = tetrahedral();
        for n in &s.pseudo.nuclei[1..] {
            let r = crate::mesh::norm(&n.position);
            assert!((r - 1.6).abs() < 1e-12);
        }
        assert_eq!(s.pseudo.total_charge(), 8.0);
    }
}
