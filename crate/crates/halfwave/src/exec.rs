//! Execution backend.
//!
//! With the `parallel` feature the kernels run on rayon; without it, or after
//! [`set_sequential`], they run as plain loops. Reductions are always formed
//! from fixed-size chunks summed in index order, so results do not depend on
//! the number of threads.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Chunk length used by reductions and pointwise kernels.
pub const CHUNK: usize = 4096;

/// Force sequential execution at runtime (no effect without `parallel`).
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Worker cap from `HALFWAVE_WORKERS`, falling back to the machine size.
pub fn workers() -> usize {
    let env = std::env::var("HALFWAVE_WORKERS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&w| w > 0);
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    env.unwrap_or(avail)
}

/// Deterministic sum of `f` over chunked sub-ranges of `0..len`.
pub fn chunked_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let nchunks = len.div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(len);
    let partials: Vec<f64> = map_indices(nchunks, |c| f(range(c)));
    partials.iter().sum()
}

/// Order-preserving map over `0..count`.
pub fn map_indices<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..count).into_par_iter().map(f).collect();
    }
    (0..count).map(f).collect()
}

/// Apply `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Pointwise fill: `out[i] = f(i)`.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    for_each_chunk_mut(out, CHUNK, |c, chunk| {
        let base = c * CHUNK;
        for (i, v) in chunk.iter_mut().enumerate() {
            *v = f(base + i);
        }
    });
}

/// Run independent jobs on a pool capped at [`workers`], preserving order.
pub fn run_jobs<J, R, F>(jobs: &[J], f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers()).build() {
            return pool.install(|| jobs.par_iter().map(&f).collect());
        }
    }
    jobs.iter().map(f).collect()
}
