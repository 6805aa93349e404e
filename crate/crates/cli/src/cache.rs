//! Reference ground states computed once and reused across studies.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ksfem_core::analysis::{solve_level, Level};
use ksfem_core::fem::FeSpace;
use ksfem_core::ksdft::{GroundState, GroundStateRecord, ScfConfig};
use ksfem_core::mesh::Mesh;
use ksfem_core::physics::ModelSystem;
use ksfem_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const CACHE_ENV: &str = "KSFEM_CACHE_DIR";
const KEY_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheOutcome {
    pub key: String,
    pub path: PathBuf,
    pub hit: bool,
    /// Time spent solving; zero on a hit.
    pub solve_seconds: f64,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$KSFEM_CACHE_DIR`, else `.ksfem-cache` in the working directory.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(".ksfem-cache"),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hash of everything that determines the reference solution.
    pub fn key(system: &ModelSystem, level: Level, scf: &ScfConfig) -> String {
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            version: u32,
            system: &'a ModelSystem,
            level: Level,
            scf: &'a ScfConfig,
        }
        let material = serde_json::to_vec(&KeyMaterial {
            version: KEY_VERSION,
            system,
            level,
            scf,
        })
        .expect("key material serializes");
        let digest = Sha256::digest(&material);
        let mut hex = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn load(&self, path: &Path, system: &ModelSystem, level: Level) -> Option<GroundState> {
        let text = fs::read_to_string(path).ok()?;
        let attempt = || -> Result<GroundState> {
            let rec = GroundStateRecord::from_json(&text)?;
            if &rec.system != system {
                return Err(Error::InvalidInput("cached record is for another system".into()));
            }
            let space = Arc::new(FeSpace::new(Mesh::uniform(system.half_width, level.n)?, level.degree)?);
            let gs = rec.into_ground_state_on(space)?;
            if !gs.converged {
                return Err(Error::InvalidInput("cached reference is not converged".into()));
            }
            Ok(gs)
        };
        match attempt() {
            Ok(gs) => Some(gs),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}; recomputing", path.display());
                None
            }
        }
    }

    fn store(&self, path: &Path, record: &GroundStateRecord) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidInput(format!("cache write {}: {e}", path.display()));
        fs::create_dir_all(&self.dir).map_err(io)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, record.to_json()?).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)?;
        Ok(())
    }

    /// Returns the converged reference, solving and storing it on a miss.
    pub fn reference(
        &self,
        system: &ModelSystem,
        level: Level,
        scf: &ScfConfig,
    ) -> Result<(GroundState, CacheOutcome)> {
        let key = Self::key(system, level, scf);
        let path = self.path_for(&key);
        if let Some(gs) = self.load(&path, system, level) {
            log::info!(
                "reference n={} P{} from cache {}",
                level.n,
                level.degree,
                path.display()
            );
            return Ok((
                gs,
                CacheOutcome {
                    key,
                    path,
                    hit: true,
                    solve_seconds: 0.0,
                },
            ));
        }
        let t = Instant::now();
        let (problem, gs) = solve_level(system, level, scf)?;
        let solve_seconds = t.elapsed().as_secs_f64();
        if !gs.converged {
            return Err(Error::NotConverged {
                solver: "reference scf",
                iterations: gs.iterations,
                residual: gs.density_residual(),
            });
        }
        if let Err(e) = self.store(&path, &GroundStateRecord::new(&problem, &gs)) {
            log::warn!("reference not cached: {e}");
        }
        Ok((
            gs,
            CacheOutcome {
                key,
                path,
                hit: false,
                solve_seconds,
            },
        ))
    }
}
