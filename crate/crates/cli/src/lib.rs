//! Batch driver for the `qpost` binary: TOML experiment configs, one task
//! per subcommand, JSON reports plus CSV summary tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod study;
pub mod tasks;
pub mod verify;

use config::{ExperimentConfig, Task};
use qpost::{Error, Result};
pub use tasks::{run_task, Outcome};

/// Environment variable that caps the worker pool, below `--workers` and
/// above the config file.
pub const WORKERS_ENV: &str = "QPOST_WORKERS";

/// Worker count from the flag, then the environment, then the config;
/// `None` means one per core.
pub fn resolve_workers(
    flag: Option<usize>,
    env: Option<&str>,
    cfg: Option<usize>,
) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Some(v) = env {
        let w: usize = v.trim().parse().map_err(|_| {
            Error::config(
                WORKERS_ENV,
                format!("expected a positive integer, got {v:?}"),
            )
        })?;
        if w == 0 {
            return Err(Error::config(WORKERS_ENV, "must be at least 1"));
        }
        return Ok(Some(w));
    }
    Ok(cfg)
}

/// Run a resolved config on a pool of `cfg.workers` threads.
pub fn run(task: Task, cfg: &ExperimentConfig) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| run_task(task, cfg))
}
