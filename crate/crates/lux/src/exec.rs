//! Data-parallel map over independent work items. The `parallel` feature
//! (on by default) backs [`map`] with a rayon pool; without it both entry
//! points run sequentially. Output order always matches input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over items, in parallel when the `parallel` feature is enabled.
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map, always, regardless of features. The benchmark suite
/// compares this against [`map`].
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// True when [`map`] actually fans out.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Size the worker pool. A no-op once any parallel work has run, and without
/// the `parallel` feature (where everything is sequential anyway).
#[cfg(feature = "parallel")]
pub fn configure_jobs(jobs: usize) {
    if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
        eprintln!("warning: worker pool already initialized; --jobs ignored");
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_jobs(_jobs: usize) {
    eprintln!("warning: built without the parallel feature; --jobs ignored");
}
