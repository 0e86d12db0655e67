//! Worker-count control.
//!
//! Every parallel section in the crate writes results at fixed indices and
//! reduces in index order, so the pool size changes wall time only.

use rayon::ThreadPool;

use crate::{Error, Result};

pub fn pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Runs `f` inside a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(pool(workers)?.install(f))
}
