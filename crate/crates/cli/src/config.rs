//! Run configuration: JSON schema, overrides and validation. Every problem
//! is reported with the JSON pointer of the offending value.

use std::fmt;
use std::path::PathBuf;

use ksfem_core::analysis::Reference;
use ksfem_core::ksdft::ScfConfig;
use ksfem_core::physics::{ModelSystem, PRESETS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::overrides::{apply_override, parse_override};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Study,
    Infsup,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Study => "study",
            Command::Infsup => "infsup",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemChoice {
    Preset(String),
    Spec(ModelSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemChoice>,
    /// Cells per axis: one level for `solve`/`infsup`, increasing levels for `study`.
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default)]
    pub scf: ScfConfig,
    pub output_dir: PathBuf,
    /// Overrides `scf.seed` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Unoccupied directions used by the inf-sup audit.
    #[serde(default = "default_infsup_dim")]
    pub infsup_dim: usize,
    /// Also audit inf-sup at every study level.
    #[serde(default)]
    pub audit_levels: bool,
}

fn default_degree() -> usize {
    1
}

fn default_infsup_dim() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// JSON pointer into the (overridden) config; empty for the root.
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{p}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

/// Parses config text, applies `--set` overrides and checks the schema.
/// Semantic checks are in [`RunConfig::validate`].
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::at("", format!("not valid JSON: {e}")))?;
    if !value.is_object() {
        return Err(ConfigError::at("", "config must be a JSON object"));
    }
    apply_overrides(&mut value, overrides)?;
    from_value(value)
}

pub fn apply_overrides(value: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for text in overrides {
        let ov = parse_override(text).map_err(|e| ConfigError::at("", format!("--set: {e}")))?;
        apply_override(value, &ov)
            .map_err(|e| ConfigError::at(format!("/{}", ov.path.join("/")), format!("--set: {e}")))?;
    }
    Ok(())
}

pub fn from_value(value: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = pointer_of(e.path());
        ConfigError::at(pointer, e.into_inner().to_string())
    })
}

impl RunConfig {
    /// Config used by `oracle-check` when no file is given.
    pub fn oracle_default() -> Self {
        Self {
            command: Some(Command::OracleCheck),
            system: None,
            levels: Vec::new(),
            degree: 1,
            reference: None,
            scf: ScfConfig::default(),
            output_dir: PathBuf::from("oracle-check"),
            seed: None,
            infsup_dim: default_infsup_dim(),
            audit_levels: false,
        }
    }

    pub fn effective_scf(&self) -> ScfConfig {
        let mut scf = self.scf.clone();
        if let Some(seed) = self.seed {
            scf.seed = seed;
        }
        scf
    }

    pub fn resolve_system(&self) -> Result<ModelSystem, ConfigError> {
        match &self.system {
            None => Err(ConfigError::at("/system", "a system is required for this command")),
            Some(SystemChoice::Preset(name)) => ModelSystem::preset(name).map_err(|_| {
                ConfigError::at(
                    "/system/preset",
                    format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")),
                )
            }),
            Some(SystemChoice::Spec(sys)) => {
                sys.validate()
                    .map_err(|e| ConfigError::at("/system/spec", e.to_string()))?;
                Ok(sys.clone())
            }
        }
    }

    /// Semantic checks for `command`; nothing is computed before these pass.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(ConfigError::at(
                    "/command",
                    format!("config is for {:?} but {:?} was requested", c.name(), command.name()),
                ));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ConfigError::at("/output_dir", "must not be empty"));
        }
        self.effective_scf()
            .validate()
            .map_err(|e| ConfigError::at("/scf", e.to_string()))?;
        if command == Command::OracleCheck {
            return Ok(());
        }
        let system = self.resolve_system()?;
        if self.degree != 1 && self.degree != 2 {
            return Err(ConfigError::at(
                "/degree",
                format!("degree must be 1 or 2, got {}", self.degree),
            ));
        }
        if let Some(i) = self.levels.iter().position(|&n| n < 2) {
            return Err(ConfigError::at(
                format!("/levels/{i}"),
                "a level needs at least 2 cells per axis",
            ));
        }
        match command {
            Command::Solve | Command::Infsup => {
                if self.levels.len() != 1 {
                    return Err(ConfigError::at("/levels", "exactly one level is required"));
                }
            }
            Command::Study => {
                if self.levels.len() < 2 {
                    return Err(ConfigError::at("/levels", "a study needs at least two levels"));
                }
                if let Some(i) = self.levels.windows(2).position(|w| w[1] <= w[0]) {
                    return Err(ConfigError::at(
                        format!("/levels/{}", i + 1),
                        "levels must be strictly increasing",
                    ));
                }
                match &self.reference {
                    None => return Err(ConfigError::at("/reference", "a study needs a reference")),
                    Some(Reference::Mesh { n, degree }) => {
                        let finest = *self.levels.last().unwrap_or(&0);
                        if *n <= finest {
                            return Err(ConfigError::at(
                                "/reference/n",
                                format!("reference n={n} must exceed the finest level {finest}"),
                            ));
                        }
                        if *degree != 1 && *degree != 2 {
                            return Err(ConfigError::at("/reference/degree", "degree must be 1 or 2"));
                        }
                    }
                    Some(Reference::Exact { energy, eigenvalues }) => {
                        if !energy.is_finite() || eigenvalues.iter().any(|v| !v.is_finite()) {
                            return Err(ConfigError::at("/reference", "exact values must be finite"));
                        }
                    }
                }
            }
            Command::OracleCheck => {}
        }
        if command == Command::Infsup && self.infsup_dim == 0 {
            return Err(ConfigError::at("/infsup_dim", "must be at least 1"));
        }
        if system.n_orbitals == 0 {
            return Err(ConfigError::at("/system", "no orbitals"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"{"system": {"preset": "diatomic"}, "levels": [8], "output_dir": "out"}"#;

    #[test]
    fn minimal_solve_config() {
        let c = parse_config(SOLVE, &[]).unwrap();
        assert_eq!(c.degree, 1);
        c.validate(Command::Solve).unwrap();
        assert!(c.validate(Command::Study).is_err());
    }

    #[test]
    fn unknown_keys_have_pointers() {
        let e = parse_config(r#"{"output_dir": "o", "scf": {"density_toll": 1}}"#, &[]).unwrap_err();
        assert_eq!(e.pointer, "/scf/density_toll");
        let e = parse_config(r#"{"output_dir": "o", "bogus": 1}"#, &[]).unwrap_err();
        assert_eq!(e.pointer, "/bogus");
        let e = parse_config(r#"{"output_dir": "o", "levels": [4, "x"]}"#, &[]).unwrap_err();
        assert_eq!(e.pointer, "/levels/1");
    }

    #[test]
    fn semantic_errors_have_pointers() {
        let c = parse_config(SOLVE, &["scf.density_tol=-1".into()]).unwrap();
        assert_eq!(c.validate(Command::Solve).unwrap_err().pointer, "/scf");
        let c = parse_config(SOLVE, &["system.preset=helium".into()]).unwrap();
        assert_eq!(c.validate(Command::Solve).unwrap_err().pointer, "/system/preset");
        let c = parse_config(
            SOLVE,
            &[
                "levels=[8, 6]".into(),
                "reference={\"kind\":\"mesh\",\"n\":16,\"degree\":1}".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.validate(Command::Study).unwrap_err().pointer, "/levels/1");
        let c = parse_config(SOLVE, &["command=infsup".into()]).unwrap();
        assert_eq!(c.validate(Command::Solve).unwrap_err().pointer, "/command");
    }

    #[test]
    fn overrides_and_seed() {
        let c = parse_config(SOLVE, &["seed=7".into(), "degree=2".into()]).unwrap();
        assert_eq!(c.effective_scf().seed, 7);
        assert_eq!(c.degree, 2);
        assert!(parse_config(SOLVE, &["nonsense".into()]).is_err());
        assert!(parse_config("[1]", &[]).is_err());
    }
}
