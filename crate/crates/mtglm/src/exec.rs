//! Parallel execution facade.
//!
//! Independent work items (Monte Carlo replicates, cross-validation folds,
//! leave-one-out refits, table nodes) are expressed as a map over an index
//! range. With the `parallel` feature (default) the map runs on the rayon
//! global pool; without it the same closure runs sequentially. Results are
//! collected in index order, so the output is identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Sequential reference implementation of [`map_indexed`].
///
/// Kept unconditionally so benchmarks can compare both code paths in one
/// build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the rayon global pool at `threads` workers.
///
/// Returns false when the pool was already initialized (first caller wins)
/// or when the crate was built without the `parallel` feature.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_maps_agree() {
        let f = |i: usize| (i as f64).sqrt() * 3.0 - 1.0;
        assert_eq!(map_indexed(257, f), map_indexed_seq(257, f));
    }
}
