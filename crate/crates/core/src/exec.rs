//! Order-preserving batch execution.
//!
//! With the `parallel` feature (default) batches run on rayon; without it,
//! or when [`Execution::Sequential`] is requested, they run on the calling
//! thread. Either way the output order matches the input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Environment variable read for the default worker count.
pub const WORKERS_ENV: &str = "CCKNAP_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// `workers: None` uses the global pool (or `CCKNAP_WORKERS` through
    /// [`Execution::from_env`]).
    #[default]
    Parallel,
    ParallelWith {
        workers: usize,
    },
}

impl Execution {
    /// Parallel with the worker count taken from `CCKNAP_WORKERS` when set.
    pub fn from_env() -> Self {
        match std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()) {
            Some(0) | None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(workers) => Execution::ParallelWith { workers },
        }
    }

    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Self::from_env(),
            Some(0) => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(workers) => Execution::ParallelWith { workers },
        }
    }

    /// `items.map(f).collect()`, possibly in parallel, preserving order.
    pub fn map<I, T, F>(&self, items: Vec<I>, f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(I) -> T + Sync + Send,
    {
        match *self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.into_par_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::ParallelWith { workers } => {
                match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                    Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
                    Err(_) => items.into_par_iter().map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel | Execution::ParallelWith { .. } => {
                items.into_iter().map(f).collect()
            }
        }
    }
}
