//! Thin dispatch layer between the rayon data-parallel paths (feature
//! `parallel`, on by default) and the sequential fallback. Work is always
//! split into the same fixed partitions so results are bitwise identical
//! across both paths and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether fanning out can help at all; on a one-thread pool the kernels
/// take their buffer-reusing sequential paths (same results either way).
pub(crate) fn multi_threaded() -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads() > 1
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Map over owned items, preserving order.
pub(crate) fn map_collect_opt<I, O, F>(par: bool, items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par && multi_threaded() {
        return items.into_par_iter().map(f).collect();
    }
    let _ = par;
    items.into_iter().map(f).collect()
}

/// Apply `f` to disjoint `chunk`-sized pieces of `data` with the piece index.
pub(crate) fn for_each_chunk_mut_opt<T, F>(par: bool, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if par && multi_threaded() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = par;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    for_each_chunk_mut_opt(true, data, chunk, f)
}

/// Run `f` over index ranges `[start, end)` split from `0..n` in `step`-sized
/// pieces, collecting per-piece outputs in piece order.
pub(crate) fn map_ranges_opt<O, F>(par: bool, n: usize, step: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize, usize) -> O + Sync + Send,
{
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(step.max(1))
        .map(|s| (s, (s + step).min(n)))
        .collect();
    map_collect_opt(par, ranges, |(s, e)| f(s, e))
}

pub(crate) fn map_ranges<O, F>(n: usize, step: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize, usize) -> O + Sync + Send,
{
    map_ranges_opt(true, n, step, f)
}
