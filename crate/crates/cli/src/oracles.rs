//! Physics oracles with known answers, run by `ksfem oracle-check`.

use std::f64::consts::PI;
use std::sync::Arc;

use ksfem_core::fem::FeSpace;
use ksfem_core::ksdft::{scf_solve, KsProblem, ScfConfig};
use ksfem_core::mesh::Mesh;
use ksfem_core::physics::{oscillator, solve_hartree, BoundaryRule, XcFunctional};
use ksfem_core::Result;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleResult {
    fn new(name: impl Into<String>, computed: f64, expected: f64, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            computed,
            expected,
            error,
            tolerance,
            passed: error.is_finite() && error <= tolerance,
        }
    }
}

/// Potential of a unit Gaussian charge `π^{-3/2} e^{-r²}` is `erf(r)/r`.
pub fn gaussian_hartree() -> Result<Vec<OracleResult>> {
    let space = Arc::new(FeSpace::new(Mesh::uniform(4.0, 10)?, 2)?);
    let rho: Vec<f64> = space
        .qp_points()
        .iter()
        .map(|x| PI.powf(-1.5) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
        .collect();
    let s = solve_hartree(&space, &rho, BoundaryRule::Multipole2)?;
    let mut out = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        let v = s.potential_at(&space, &[r, 0.0, 0.0]);
        let exact = libm::erf(r) / r;
        out.push(OracleResult::new(
            format!("hartree_gaussian_v({r})"),
            v,
            exact,
            (v - exact).abs() / exact,
            5e-3,
        ));
    }
    let e_exact = 1.0 / (2.0 * PI).sqrt();
    out.push(OracleResult::new(
        "hartree_gaussian_energy",
        s.energy,
        e_exact,
        (s.energy - e_exact).abs() / e_exact,
        5e-3,
    ));
    Ok(out)
}

/// Harmonic oscillator: ground level 3/2, first excited level 5/2 (threefold).
pub fn oscillator_spectrum() -> Result<Vec<OracleResult>> {
    let mut sys = oscillator();
    sys.n_orbitals = 4;
    // The n=2 shell has decayed below 1e-12 at |x| = 6.
    sys.half_width = 6.0;
    let p = KsProblem::uniform(sys, 16, 2)?;
    let gs = scf_solve(&p, &ScfConfig::default())?;
    let exact = [1.5, 2.5, 2.5, 2.5];
    Ok(gs
        .eigenvalues
        .iter()
        .zip(exact)
        .enumerate()
        .map(|(i, (&l, e))| OracleResult::new(format!("oscillator_lambda{}", i + 1), l, e, (l - e).abs() / e, 1e-2))
        .collect())
}

/// `E′` against a central difference of `E` at several densities.
pub fn xc_finite_differences() -> Result<Vec<OracleResult>> {
    let mut out = Vec::new();
    let functionals = [
        ("dirac", XcFunctional::DiracExchange),
        ("xalpha", XcFunctional::Xalpha { alpha: 0.7 }),
        ("dirac_pz81", XcFunctional::DiracPlusPz81),
    ];
    for (name, f) in functionals {
        let mut worst: f64 = 0.0;
        for t in [1e-3, 1e-2, 0.1, 0.5, 2.0, 10.0] {
            let h = 1e-4 * t;
            let fd = (f.energy_density(t + h)? - f.energy_density(t - h)?) / (2.0 * h);
            let v = f.potential(t)?;
            worst = worst.max((fd - v).abs() / v.abs().max(1e-300));
        }
        out.push(OracleResult::new(format!("xc_fd_{name}"), worst, 0.0, worst, 1e-6));
    }
    Ok(out)
}

pub fn run_all() -> Result<Vec<OracleResult>> {
    let mut all = gaussian_hartree()?;
    all.extend(oscillator_spectrum()?);
    all.extend(xc_finite_differences()?);
    Ok(all)
}
