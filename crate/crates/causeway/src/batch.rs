//! Data-parallel helpers for the candidate-evaluation inner loops.
//!
//! With the `parallel` feature (on by default) large batches are evaluated
//! on a rayon pool; small batches and feature-off builds use the sequential
//! twin. Both paths produce identical output in identical order, so callers
//! keep their determinism contracts either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Batches below this size are evaluated sequentially even when the
/// `parallel` feature is enabled; fork/join overhead dominates under it.
pub const PARALLEL_THRESHOLD: usize = 4096;

/// Sequential element-wise map preserving input order.
pub fn map_collect_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Rayon-backed element-wise map. Collecting an indexed parallel iterator
/// preserves input order, so the result is identical to the sequential twin.
#[cfg(feature = "parallel")]
pub fn map_collect_par<T, U>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U>
where
    T: Sync,
    U: Send,
{
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, choosing the parallel path for large batches.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U>
where
    T: Sync,
    U: Send,
{
    if items.len() >= PARALLEL_THRESHOLD {
        map_collect_par(items, f)
    } else {
        map_collect_seq(items, f)
    }
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U>
where
    T: Sync,
    U: Send,
{
    map_collect_seq(items, f)
}
