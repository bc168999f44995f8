//! Thread-pool executor.

use extremis_core::rng::Executor;
use rayon::prelude::*;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "EXTREMIS_THREADS";

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `threads == 0` uses one worker per available core.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// Worker count from `EXTREMIS_THREADS` if set, else the command-line value,
/// else 0 (all cores).
pub fn resolve_threads(cli: Option<usize>) -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(_) => Ok(cli.unwrap_or(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use extremis_core::rng::Serial;

    #[test]
    fn pool_preserves_index_order() {
        let pool = Pool::new(4).unwrap();
        let f = |i: usize| (i * 7919) % 1013;
        assert_eq!(pool.map_indexed(5000, f), Serial.map_indexed(5000, f));
        assert_eq!(pool.threads(), 4);
    }
}
