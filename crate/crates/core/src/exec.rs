//! Data-parallel helpers over grid points.
//!
//! With the `parallel` feature (default) the maps run on the rayon pool; without
//! it they run sequentially. Reductions are never done here: callers sum the
//! returned vectors in index order so results do not depend on thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps a slice elementwise.
pub fn map_slice<A, T, F>(xs: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        xs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter().map(f).collect()
    }
}

/// Runs independent jobs (sweeps, probes) and returns results in input order.
pub fn map_jobs<A, T, F>(jobs: Vec<A>, f: F) -> Vec<T>
where
    A: Send,
    T: Send,
    F: Fn(A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        jobs.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(f).collect()
    }
}

/// Sum in fixed index order.
pub fn ordered_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| acc + x)
}
