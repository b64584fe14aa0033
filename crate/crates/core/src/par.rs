//! Row-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the rayon pool; without it
//! they run in order on the calling thread. Each closure owns one output row,
//! so the two paths produce identical bits. [`set_sequential`] switches a
//! parallel build to the sequential path at run time, for comparisons.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces the sequential path (or restores the default) process-wide.
pub fn set_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::Relaxed);
}

/// Whether the helpers currently fan out to the worker pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed)
}

/// Below this many scalar operations a kernel stays on the calling thread.
pub const MIN_PARALLEL_WORK: usize = 1 << 14;

/// Calls `f(row_index, row)` for every `row_len`-sized chunk of `out`.
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        let rows = out.len() / row_len;
        if is_parallel() && rows > 1 && rows.saturating_mul(work_per_row) >= MIN_PARALLEL_WORK {
            out.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
            return;
        }
    }
    let _ = work_per_row;
    out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

/// Order-preserving map over `0..n`.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Runs `f(index, item)` over every element, results in index order.
pub fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Number of worker threads the parallel path will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Sizes the global worker pool. Has to run before any parallel work; a
/// no-op without the `parallel` feature.
pub fn init_threads(n: usize) -> crate::Result<()> {
    if n == 0 {
        return Err(crate::Error::Config("thread count must be >= 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}
