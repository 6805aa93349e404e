//! Command dispatch, artifacts and the run report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ksfem_core::analysis::{infsup_audit, study_against, Level, Reference, ReferenceSolution, StudyOptions};
use ksfem_core::ksdft::{scf_solve, GroundStateRecord, KsProblem};
use serde::Serialize;

use crate::cache::{CacheOutcome, ReferenceCache};
use crate::config::{self, Command, ConfigError, RunConfig};
use crate::oracles;

pub const BUILD_ID: &str = env!("KSFEM_BUILD_ID");

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub build_id: String,
    pub command: String,
    pub config: RunConfig,
    pub phases: Vec<Phase>,
    /// Every sub-run converged.
    pub converged: bool,
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Failure before any artifact is written.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "invalid config: {e}"),
            RunError::Io(e) => f.write_str(e),
        }
    }
}

/// Reads, overrides and validates the config for `command`.
pub fn load_config(command: Command, path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, RunError> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| RunError::Io(format!("cannot read {}: {e}", p.display())))?;
            config::parse_config(&text, overrides).map_err(RunError::Config)?
        }
        None => {
            let mut value = serde_json::to_value(RunConfig::oracle_default()).expect("default config serializes");
            config::apply_overrides(&mut value, overrides).map_err(RunError::Config)?;
            config::from_value(value).map_err(RunError::Config)?
        }
    };
    cfg.validate(command).map_err(RunError::Config)?;
    Ok(cfg)
}

struct Ctx {
    report: RunReport,
}

impl Ctx {
    fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.report.phases.push(Phase {
            name: name.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), String> {
        fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.report.outputs.push(path);
        Ok(())
    }
}

/// Runs a validated config; always leaves `report.json` in the output
/// directory and returns the exit code.
pub fn execute(command: Command, cfg: RunConfig, cache: &ReferenceCache) -> i32 {
    let dir = cfg.output_dir.clone();
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return EXIT_ERROR;
    }
    let mut ctx = Ctx {
        report: RunReport {
            build_id: BUILD_ID.into(),
            command: command.name().into(),
            config: cfg.clone(),
            phases: Vec::new(),
            converged: false,
            exit_code: EXIT_ERROR,
            outputs: Vec::new(),
            cache: None,
            notes: Vec::new(),
            error: None,
        },
    };
    let outcome = match command {
        Command::Solve => solve(&mut ctx, &cfg),
        Command::Study => study(&mut ctx, &cfg, cache),
        Command::Infsup => infsup(&mut ctx, &cfg),
        Command::OracleCheck => oracle_check(&mut ctx),
    };
    let code = match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_UNCONVERGED,
        Err(e) => {
            eprintln!("error: {e}");
            ctx.report.error = Some(e);
            EXIT_ERROR
        }
    };
    ctx.report.exit_code = code;
    let report_path = dir.join("report.json");
    ctx.report.outputs.push(report_path.clone());
    let text = serde_json::to_string_pretty(&ctx.report).expect("report serializes");
    if let Err(e) = fs::write(&report_path, text + "\n") {
        eprintln!("error: cannot write {}: {e}", report_path.display());
        return EXIT_ERROR;
    }
    code
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| e.to_string())
}

fn solve(ctx: &mut Ctx, cfg: &RunConfig) -> Result<bool, String> {
    let system = cfg.resolve_system().map_err(|e| e.to_string())?;
    let scf = cfg.effective_scf();
    let problem = ctx
        .phase("setup", || KsProblem::uniform(system, cfg.levels[0], cfg.degree))
        .map_err(|e| e.to_string())?;
    let gs = ctx
        .phase("scf", || scf_solve(&problem, &scf))
        .map_err(|e| e.to_string())?;
    let record = GroundStateRecord::new(&problem, &gs);
    ctx.write(
        cfg.output_dir.join("ground_state.json"),
        &record.to_json().map_err(|e| e.to_string())?,
    )?;
    ctx.report.converged = gs.converged;
    if !gs.converged {
        ctx.report
            .notes
            .push(format!("scf stopped unconverged after {} iterations", gs.iterations));
    }
    Ok(gs.converged)
}

fn infsup(ctx: &mut Ctx, cfg: &RunConfig) -> Result<bool, String> {
    let system = cfg.resolve_system().map_err(|e| e.to_string())?;
    let scf = cfg.effective_scf();
    let problem = ctx
        .phase("setup", || KsProblem::uniform(system, cfg.levels[0], cfg.degree))
        .map_err(|e| e.to_string())?;
    let gs = ctx
        .phase("scf", || scf_solve(&problem, &scf))
        .map_err(|e| e.to_string())?;
    ctx.report.converged = gs.converged;
    if !gs.converged {
        ctx.report
            .notes
            .push("ground state unconverged; inf-sup audit skipped".into());
        return Ok(false);
    }
    let rep = ctx
        .phase("infsup", || infsup_audit(&problem, &gs, cfg.infsup_dim))
        .map_err(|e| e.to_string())?;
    if !rep.positive {
        ctx.report
            .notes
            .push(format!("inf-sup estimate is not positive: {:.6e}", rep.gamma));
    }
    ctx.write(cfg.output_dir.join("infsup.json"), &to_json(&rep)?)?;
    Ok(true)
}

fn study(ctx: &mut Ctx, cfg: &RunConfig, cache: &ReferenceCache) -> Result<bool, String> {
    let system = cfg.resolve_system().map_err(|e| e.to_string())?;
    let scf = cfg.effective_scf();
    let levels: Vec<Level> = cfg.levels.iter().map(|&n| Level::new(n, cfg.degree)).collect();
    let opts = StudyOptions {
        scf: scf.clone(),
        infsup_dim: if cfg.audit_levels { cfg.infsup_dim } else { 0 },
    };
    let report = match cfg.reference.as_ref().expect("validated") {
        Reference::Mesh { n, degree } => {
            let (gs, outcome) = ctx
                .phase("reference", || cache.reference(&system, Level::new(*n, *degree), &scf))
                .map_err(|e| e.to_string())?;
            ctx.report.cache = Some(outcome);
            ctx.phase("levels", || {
                study_against(&system, &levels, ReferenceSolution::Mesh(&gs), &opts)
            })
        }
        Reference::Exact { energy, eigenvalues } => ctx.phase("levels", || {
            study_against(
                &system,
                &levels,
                ReferenceSolution::Exact {
                    energy: *energy,
                    eigenvalues,
                },
                &opts,
            )
        }),
    }
    .map_err(|e| e.to_string())?;
    let dir = &cfg.output_dir;
    ctx.write(dir.join("rates.csv"), &report.to_csv())?;
    ctx.write(dir.join("rates.gp"), &report.gnuplot_script("rates.csv", "rates.png"))?;
    ctx.write(dir.join("study.json"), &to_json(&report)?)?;
    if let Some(f) = &report.failure {
        ctx.report.notes.push(f.clone());
    }
    if report.rows.iter().any(|r| r.gamma.is_some_and(|g| g <= 0.0)) {
        ctx.report
            .notes
            .push("a level has a non-positive inf-sup estimate".into());
    }
    ctx.report.converged = report.complete;
    Ok(report.complete)
}

fn oracle_check(ctx: &mut Ctx) -> Result<bool, String> {
    let results = ctx.phase("oracles", oracles::run_all).map_err(|e| e.to_string())?;
    let dir = ctx.report.config.output_dir.clone();
    ctx.write(dir.join("oracles.json"), &to_json(&results)?)?;
    ctx.report.converged = true;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    for r in &results {
        println!(
            "{} {} error {:.3e} (tolerance {:.1e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.error,
            r.tolerance
        );
    }
    if failed.is_empty() {
        Ok(true)
    } else {
        Err(format!("oracles failed: {}", failed.join(", ")))
    }
}
