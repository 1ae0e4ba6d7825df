//! Index-ordered data-parallel map over independent work items.
//!
//! With the `parallel` feature the work runs on rayon; without it every call
//! falls back to a plain sequential loop. Either way the output is ordered by
//! index, so results do not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon when compiled with the `parallel` feature, sequential otherwise.
    #[default]
    Parallel,
}

pub fn map_indexed<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => (0..count).map(f).collect(),
    }
}

/// Caps the global worker pool. `0` keeps the library default. Only the
/// first call in a process has any effect.
pub fn configure_threads(cap: usize) {
    #[cfg(feature = "parallel")]
    if cap > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cap).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cap;
}

/// Reads `LQGTRACK_THREADS` and applies it via [`configure_threads`].
pub fn configure_from_env() {
    if let Some(cap) = std::env::var("LQGTRACK_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
    {
        configure_threads(cap);
    }
}
