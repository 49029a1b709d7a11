//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction splits its input into fixed-size chunks and adds the
//! per-chunk partial sums in chunk order, so results are bitwise identical
//! whichever [`Exec`] mode (and however many threads) produced them.

/// Chunk length for reductions and pointwise kernels.
pub const CHUNK: usize = 4096;

/// Execution mode for grid kernels.
///
/// `Parallel` uses the rayon pool when the `parallel` feature is enabled and
/// silently degrades to `Sequential` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Set the size of the global rayon pool. No-op without the `parallel` feature.
pub fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Deterministic chunked sum of `f(i, &x)` over a slice.
pub fn sum_indexed<T, F>(exec: Exec, data: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(usize, &T) -> f64 + Sync,
{
    let partial = |(c, chunk): (usize, &[T])| -> f64 {
        let base = c * CHUNK;
        let mut s = 0.0;
        for (k, x) in chunk.iter().enumerate() {
            s += f(base + k, x);
        }
        s
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let parts: Vec<f64> = data.par_chunks(CHUNK).enumerate().map(partial).collect();
        return parts.iter().sum();
    }
    let _ = exec;
    let parts: Vec<f64> = data.chunks(CHUNK).enumerate().map(partial).collect();
    parts.iter().sum()
}

/// Apply `f(i, &mut x)` to every element.
pub fn for_each_indexed<T, F>(exec: Exec, data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    let run = |(c, chunk): (usize, &mut [T])| {
        let base = c * CHUNK;
        for (k, x) in chunk.iter_mut().enumerate() {
            f(base + k, x);
        }
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(CHUNK).enumerate().for_each(run);
        return;
    }
    let _ = exec;
    data.chunks_mut(CHUNK).enumerate().for_each(run);
}

/// Apply `f` to consecutive blocks of length `block`.
pub fn for_each_block<T, F>(exec: Exec, data: &mut [T], block: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(block)
            .enumerate()
            .for_each(|(i, b)| f(i, b));
        return;
    }
    let _ = exec;
    data.chunks_mut(block).enumerate().for_each(|(i, b)| f(i, b));
}

/// Map `0..count` to owned results, preserving order.
pub fn map_range<R, F>(exec: Exec, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_agree_bitwise_across_modes() {
        let data: Vec<f64> = (0..50_000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let a = sum_indexed(Exec::Sequential, &data, |_, x| x * x);
        let b = sum_indexed(Exec::Parallel, &data, |_, x| x * x);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn indexed_map_sees_global_index() {
        let mut data = vec![0usize; 10_000];
        for_each_indexed(Exec::Parallel, &mut data, |i, x| *x = i);
        assert!(data.iter().enumerate().all(|(i, &x)| i == x));
    }
}
