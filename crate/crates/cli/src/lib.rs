//! Batch front-end for the ksfem solver: configs, overrides, the reference
//! cache and command dispatch. The binary is a thin wrapper over [`run`].

pub mod cache;
pub mod config;
pub mod oracles;
pub mod overrides;
pub mod run;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use overrides::{parse_override, Override};

pub const THREADS_ENV: &str = "KSFEM_THREADS";

/// Sizes the global worker pool from `KSFEM_THREADS` (0 or unset = auto).
pub fn init_threads() -> Result<usize, String> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))?,
        _ => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("cannot size the worker pool: {e}"))?;
    }
    Ok(rayon::current_num_threads())
}
