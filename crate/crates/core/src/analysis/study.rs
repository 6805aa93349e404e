use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::procrustes_align;
use super::hessian::infsup_audit;
use crate::error::{Error, Result};
use crate::ksdft::{scf_solve, GroundState, KsProblem, ScfConfig};
use crate::physics::ModelSystem;

/// One uniform discretization: `n` cells per axis, Lagrange degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub n: usize,
    pub degree: usize,
}

impl Level {
    pub fn new(n: usize, degree: usize) -> Self {
        Self { n, degree }
    }
}

/// What the study errors are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    /// A fine-mesh solution of the same system.
    Mesh { n: usize, degree: usize },
    /// Known exact energy and eigenvalues; orbital errors are not reported.
    Exact { energy: f64, eigenvalues: Vec<f64> },
}

/// A solved reference, ready to compare against.
pub enum ReferenceSolution<'a> {
    Mesh(&'a GroundState),
    Exact { energy: f64, eigenvalues: &'a [f64] },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    pub scf: ScfConfig,
    /// Unoccupied directions for the per-level inf-sup audit; 0 skips it.
    pub infsup_dim: usize,
}

pub const CSV_COLUMNS: [&str; 7] = ["h", "dofs", "energy_err", "ev1_err", "ev2_err", "h1_err", "l2_err"];
/// Error columns that get a fitted slope.
pub const ERROR_COLUMNS: [&str; 5] = ["energy_err", "ev1_err", "ev2_err", "h1_err", "l2_err"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    pub energy: f64,
    pub eigenvalues: Vec<f64>,
    pub energy_err: f64,
    pub ev1_err: f64,
    pub ev2_err: f64,
    pub h1_err: f64,
    pub l2_err: f64,
    pub scf_iterations: usize,
    pub converged: bool,
    /// Inf-sup estimate at this level's ground state, when audited.
    pub gamma: Option<f64>,
}

impl RateRow {
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "energy_err" => self.energy_err,
            "ev1_err" => self.ev1_err,
            "ev2_err" => self.ev2_err,
            "h1_err" => self.h1_err,
            "l2_err" => self.l2_err,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub column: String,
    pub value: f64,
    /// Rows entering the fit.
    pub levels_used: usize,
    /// The coarsest row was dropped by the self-error rule.
    pub excluded_coarsest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub reference: Reference,
    pub h: Option<f64>,
    pub energy: f64,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub system: String,
    pub degree: usize,
    pub reference: ReferenceInfo,
    /// Ordered by decreasing `h`.
    pub rows: Vec<RateRow>,
    pub slopes: Vec<Slope>,
    /// False when a level failed to converge; `rows` then stops before it.
    pub complete: bool,
    pub failure: Option<String>,
}

impl RateReport {
    pub fn slope(&self, column: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.column == column).map(|s| s.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.h, r.dofs, r.energy_err, r.ev1_err, r.ev2_err, r.h1_err, r.l2_err
            );
        }
        for s in &self.slopes {
            let _ = writeln!(out, "# slope_{}={:.6}", s.column, s.value);
        }
        if !self.complete {
            let _ = writeln!(out, "# partial=true");
        }
        out
    }

    /// Log-log plot of every fitted error column of `csv_name`.
    pub fn gnuplot_script(&self, csv_name: &str, image_name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "set terminal pngcairo size 800,600");
        let _ = writeln!(s, "set output '{image_name}'");
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set logscale xy");
        let _ = writeln!(s, "set xlabel 'h'");
        let _ = writeln!(s, "set ylabel 'error'");
        let _ = writeln!(s, "set key left top");
        let _ = writeln!(s, "set title '{} P{}'", self.system, self.degree);
        let plots: Vec<String> = self
            .slopes
            .iter()
            .map(|sl| {
                let col = CSV_COLUMNS.iter().position(|c| *c == sl.column).unwrap_or(0) + 1;
                format!(
                    "'{csv_name}' skip 1 using 1:{col} with linespoints title '{} (slope {:.2})'",
                    sl.column, sl.value
                )
            })
            .collect();
        if plots.is_empty() {
            let _ = writeln!(s, "# no error column has a fitted slope");
        } else {
            let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        }
        s
    }
}

/// Least-squares slope of `log err` against `log h`. Needs at least two
/// positive finite errors.
pub fn fit_slope(h: &[f64], err: &[f64]) -> Option<f64> {
    fit_line(h, err).map(|(p, _)| p)
}

fn fit_line(h: &[f64], err: &[f64]) -> Option<(f64, f64)> {
    if h.len() != err.len() || h.len() < 2 {
        return None;
    }
    if err.iter().chain(h).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let p = sxy / sxx;
    Some((p, my - p * mx))
}

/// Fits the slope; when `h_ref` is known the reference's own error is
/// estimated as `C h_ref^p` from the fit, and the coarsest row is dropped if
/// its error is within 10× of that estimate (at least two rows are kept).
pub fn fit_with_exclusion(h: &[f64], err: &[f64], h_ref: Option<f64>) -> Option<(f64, usize, bool)> {
    let (p, c) = fit_line(h, err)?;
    if let Some(hr) = h_ref {
        let self_err = (c + p * hr.ln()).exp();
        if h.len() > 2 && err[0] < 10.0 * self_err {
            let (q, _) = fit_line(&h[1..], &err[1..])?;
            return Some((q, h.len() - 1, true));
        }
    }
    Some((p, h.len(), false))
}

fn fit_all(rows: &[RateRow], h_ref: Option<f64>) -> Vec<Slope> {
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    ERROR_COLUMNS
        .iter()
        .filter_map(|&col| {
            let err: Vec<f64> = rows.iter().map(|r| r.column(col).unwrap_or(f64::NAN)).collect();
            fit_with_exclusion(&h, &err, h_ref).map(|(value, levels_used, excluded_coarsest)| Slope {
                column: col.to_string(),
                value,
                levels_used,
                excluded_coarsest,
            })
        })
        .collect()
}

/// Solves a system at one level; an unconverged solve is returned as such.
pub fn solve_level(system: &ModelSystem, level: Level, scf: &ScfConfig) -> Result<(KsProblem, GroundState)> {
    let problem = KsProblem::uniform(system.clone(), level.n, level.degree)?;
    let gs = scf_solve(&problem, scf)?;
    Ok((problem, gs))
}

fn check_levels(levels: &[Level]) -> Result<usize> {
    let Some(first) = levels.first() else {
        return Err(Error::InvalidInput("a study needs at least one level".into()));
    };
    if levels.iter().any(|l| l.degree != first.degree) {
        return Err(Error::InvalidInput("all study levels must share one degree".into()));
    }
    if levels.windows(2).any(|w| w[1].n <= w[0].n) {
        return Err(Error::InvalidInput(
            "study levels must be strictly increasing in n".into(),
        ));
    }
    Ok(first.degree)
}

/// Solves the reference, then every level, and fits the rates.
pub fn convergence_study(
    system: &ModelSystem,
    levels: &[Level],
    reference: &Reference,
    opts: &StudyOptions,
) -> Result<RateReport> {
    match reference {
        Reference::Mesh { n, degree } => {
            let finest = levels.iter().map(|l| l.n).max().unwrap_or(0);
            if *n <= finest {
                return Err(Error::InvalidInput(format!(
                    "reference n={n} is not finer than the finest level n={finest}"
                )));
            }
            let (_, gs) = solve_level(system, Level::new(*n, *degree), &opts.scf)?;
            if !gs.converged {
                return Err(Error::NotConverged {
                    solver: "reference scf",
                    iterations: gs.iterations,
                    residual: gs.density_residual(),
                });
            }
            study_against(system, levels, ReferenceSolution::Mesh(&gs), opts)
        }
        Reference::Exact { energy, eigenvalues } => study_against(
            system,
            levels,
            ReferenceSolution::Exact {
                energy: *energy,
                eigenvalues,
            },
            opts,
        ),
    }
}

/// Runs the levels (concurrently) against an already solved reference.
pub fn study_against(
    system: &ModelSystem,
    levels: &[Level],
    reference: ReferenceSolution<'_>,
    opts: &StudyOptions,
) -> Result<RateReport> {
    opts.scf.validate()?;
    let degree = check_levels(levels)?;
    let info = match &reference {
        ReferenceSolution::Mesh(gs) => {
            let mesh = gs.orbitals.space.mesh();
            if gs.orbitals.n_orbitals() != system.n_orbitals
                || (mesh.half_width() - system.half_width).abs() > 1e-12 * system.half_width
            {
                return Err(Error::InvalidInput(
                    "reference was computed for a different system".into(),
                ));
            }
            if levels.iter().any(|l| l.n >= mesh.cells_per_axis()) {
                return Err(Error::InvalidInput("reference must be finer than every level".into()));
            }
            ReferenceInfo {
                reference: Reference::Mesh {
                    n: mesh.cells_per_axis(),
                    degree: gs.orbitals.space.degree(),
                },
                h: Some(mesh.h()),
                energy: gs.total_energy,
                eigenvalues: gs.eigenvalues.clone(),
            }
        }
        ReferenceSolution::Exact { energy, eigenvalues } => ReferenceInfo {
            reference: Reference::Exact {
                energy: *energy,
                eigenvalues: eigenvalues.to_vec(),
            },
            h: None,
            energy: *energy,
            eigenvalues: eigenvalues.to_vec(),
        },
    };

    let outcomes: Vec<Result<RateRow>> = levels
        .par_iter()
        .map(|&level| {
            let (problem, gs) = solve_level(system, level, &opts.scf)?;
            let ev = |i: usize| match (gs.eigenvalues.get(i), info.eigenvalues.get(i)) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => f64::NAN,
            };
            let (h1_err, l2_err) = match &reference {
                ReferenceSolution::Mesh(r) => {
                    let a = procrustes_align(&r.orbitals, &gs.orbitals)?;
                    (a.aligned_distance_h1, a.aligned_distance_l2)
                }
                ReferenceSolution::Exact { .. } => (f64::NAN, f64::NAN),
            };
            let gamma = if opts.infsup_dim > 0 && gs.converged {
                Some(infsup_audit(&problem, &gs, opts.infsup_dim)?.gamma)
            } else {
                None
            };
            log::info!(
                "level n={} P{}: E {:.12} converged {} in {} iterations",
                level.n,
                level.degree,
                gs.total_energy,
                gs.converged,
                gs.iterations
            );
            Ok(RateRow {
                n: level.n,
                h: problem.space.mesh().h(),
                dofs: problem.space.n_dofs(),
                energy: gs.total_energy,
                eigenvalues: gs.eigenvalues.clone(),
                energy_err: (gs.total_energy - info.energy).abs(),
                ev1_err: ev(0),
                ev2_err: ev(1),
                h1_err,
                l2_err,
                scf_iterations: gs.iterations,
                converged: gs.converged,
                gamma,
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failure = None;
    for (level, outcome) in levels.iter().zip(outcomes) {
        let row = outcome?;
        if !row.converged {
            failure = Some(format!("level n={} P{} did not converge", level.n, level.degree));
            break;
        }
        rows.push(row);
    }
    let slopes = fit_all(&rows, info.h);
    Ok(RateReport {
        system: system.name.clone(),
        degree,
        reference: info,
        rows,
        slopes,
        complete: failure.is_none(),
        failure,
    })
}
