//! Execution backend for the data-parallel kernels.
//!
//! Every kernel takes a [`Backend`]. With the `parallel` feature the
//! [`Backend::Parallel`] variant dispatches to rayon; without it the variant
//! silently runs the sequential path. Both paths perform the same floating
//! point operations in the same order per output element, and reductions are
//! split into fixed-size chunks whose partial sums are combined sequentially,
//! so results are bit-identical regardless of backend or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Reduction chunk length. Fixed so the summation tree never depends on the
/// thread pool.
pub const REDUCE_CHUNK: usize = 4096;

/// Below this many elements the parallel path falls back to sequential.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Sequential,
    Parallel,
}

impl Default for Backend {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Backend::Parallel
        } else {
            Backend::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
impl Backend {
    fn parallel_for(self, len: usize) -> bool {
        self == Backend::Parallel && len >= PAR_THRESHOLD
    }

    /// Task-level parallelism (restarts, repetitions) is worth it at any size.
    fn parallel_tasks(self) -> bool {
        self == Backend::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel. Order is preserved.
pub fn map_tasks<T, F>(backend: Backend, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if backend.parallel_tasks() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = backend;
    (0..n).map(f).collect()
}

/// Calls `f(i, &mut slice[i])` for every element.
pub fn for_each_indexed<T, F>(backend: Backend, slice: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if backend.parallel_for(slice.len()) {
        slice
            .par_iter_mut()
            .with_min_len(1024)
            .enumerate()
            .for_each(|(i, x)| f(i, x));
        return;
    }
    let _ = backend;
    slice.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Calls `f(chunk_index, chunk)` over consecutive chunks of `chunk_len`.
pub fn for_each_chunk<T, F>(backend: Backend, slice: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if backend.parallel_for(slice.len()) {
        let min_chunks = (1024 / chunk_len).max(1);
        slice
            .par_chunks_mut(chunk_len)
            .with_min_len(min_chunks)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = backend;
    slice
        .chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum_indexed<F>(backend: Backend, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = |c: usize| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        (lo..hi).fold(0.0, |acc, i| acc + f(i))
    };
    let partials: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            if backend.parallel_for(n) {
                (0..chunks).into_par_iter().map(partial).collect()
            } else {
                (0..chunks).map(partial).collect()
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = backend;
            (0..chunks).map(partial).collect()
        }
    };
    partials.into_iter().fold(0.0, |acc, x| acc + x)
}
