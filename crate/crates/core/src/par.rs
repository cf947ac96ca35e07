//! Data-parallel map helper with a sequential fallback.
//!
//! Grid searches and method comparisons in this crate are embarrassingly
//! parallel over immutable inputs. With the `parallel` feature (default) the
//! work is spread over a rayon pool; without it the same closure runs
//! sequentially. Output order always equals input order, so results never
//! depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every element of `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Applies `f` to every element of `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential variant kept available unconditionally so benchmarks can
/// compare it against the parallel path under identical inputs.
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
