//! Per-sample maps that run on rayon when the `std` feature is enabled.

use alloc::vec::Vec;

/// Maps `f` over `0..len`, in parallel when available. Output order is the
/// index order either way, so results are deterministic.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..len).map(f).collect()
    }
}

/// Parallel map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indices(items.len(), |i| f(&items[i]))
}
