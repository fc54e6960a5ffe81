//! Execution-mode plumbing: data-parallel loops over independent simulation
//! tasks, with a sequential path that is always available.
//!
//! With the `parallel` feature (default) the parallel path runs on rayon;
//! without it, `ExecMode::Parallel` silently degrades to sequential. Results
//! are returned in task order regardless of mode, and every task owns its
//! accumulators, so numerical output is identical bit for bit in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

/// Maps `f` over `items`, preserving order.
pub fn map_collect<T, R, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.into_iter().map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.into_iter().map(f).collect()
            }
        }
    }
}

/// Caps the worker-thread count for parallel sections. `0` keeps the default
/// (one worker per logical CPU). Returns an error message if the pool was
/// already initialized with a different size.
pub fn set_worker_threads(jobs: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        if jobs == 0 {
            return Ok(());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(())
    }
}
