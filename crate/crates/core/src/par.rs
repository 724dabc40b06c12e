//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the unsuffixed helpers dispatch to
//! rayon; without it they run sequentially. Both paths produce bit-identical
//! results: maps are index-ordered and sums reduce fixed-size chunks in
//! chunk order.

use std::ops::Range;

/// Chunk length used by [`chunked_sum`]. Fixed so the reduction tree does
/// not depend on the thread count.
pub const SUM_CHUNK: usize = 512;

/// Below this many items the parallel paths fall back to sequential.
pub const PARALLEL_THRESHOLD: usize = 2 * SUM_CHUNK;

/// Configure the global worker pool. Has no effect without the `parallel`
/// feature or if the pool was already initialized.
pub fn set_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, in parallel when available. Intended for
/// independent replications (seeds, instances).
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 {
            return map_indexed_parallel(n, f);
        }
    }
    map_indexed_sequential(n, f)
}

fn chunks(len: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(SUM_CHUNK))
        .map(|c| c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(len))
        .collect()
}

/// Sum of `f(range, acc)` contributions into a `dim`-vector, sequentially.
///
/// `f` adds the contribution of the items in `range` into `acc` (which starts
/// zeroed for every chunk).
pub fn chunked_sum_sequential<F>(len: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]),
{
    let mut total = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    for range in chunks(len) {
        acc.iter_mut().for_each(|v| *v = 0.0);
        f(range, &mut acc);
        for (t, a) in total.iter_mut().zip(&acc) {
            *t += a;
        }
    }
    total
}

#[cfg(feature = "parallel")]
pub fn chunked_sum_parallel<F>(len: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    let partials: Vec<Vec<f64>> = chunks(len)
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![0.0; dim];
            f(range, &mut acc);
            acc
        })
        .collect();
    let mut total = vec![0.0; dim];
    for acc in &partials {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    total
}

/// Chunked sum, in parallel when available and `len` is large enough.
pub fn chunked_sum<F>(len: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if len >= PARALLEL_THRESHOLD {
            return chunked_sum_parallel(len, dim, f);
        }
    }
    chunked_sum_sequential(len, dim, f)
}

/// Fills `out[i] = f(i)`, in parallel when available and `out` is large.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PARALLEL_THRESHOLD {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
            return;
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}
