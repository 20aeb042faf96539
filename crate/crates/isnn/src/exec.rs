//! Chunked data-parallel execution.
//!
//! Work is always split into fixed-size index chunks and the per-chunk results
//! are combined in chunk order, so the outcome is bit-identical regardless of
//! thread count. With the `parallel` feature (default) chunks run on the rayon
//! pool; without it everything runs sequentially. The `*_seq` variants are
//! always available so benchmarks can compare both paths in one build.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default number of samples per chunk for batched NN work.
pub const DEFAULT_CHUNK: usize = 32;

/// Split `0..n` into chunks of at most `chunk` indices, in order.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0, "chunk size must be positive");
    (0..n)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(n))
        .collect()
}

/// Map `f` over fixed chunks of `0..n`; results are returned in chunk order.
pub fn map_chunks<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let ranges = chunk_ranges(n, chunk);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Sequential twin of [`map_chunks`]; identical results by construction.
pub fn map_chunks_seq<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    F: Fn(Range<usize>) -> R,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Map `f` over owned items; results keep item order.
pub fn map_vec<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sum per-chunk gradient buffers into `acc`, strictly in chunk order.
pub fn reduce_in_order(acc: &mut [f64], chunks: Vec<Vec<f64>>) {
    for buf in chunks {
        debug_assert_eq!(buf.len(), acc.len());
        for (a, b) in acc.iter_mut().zip(buf.iter()) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_and_partition() {
        let ranges = chunk_ranges(10, 3);
        assert_eq!(ranges, vec![0..3, 3..6, 6..9, 9..10]);
        let total: usize = ranges.iter().map(|r| r.len()).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let f = |r: Range<usize>| -> Vec<f64> {
            r.map(|i| (i as f64).sin() * 1e-3 + (i as f64).sqrt()).collect()
        };
        let a: Vec<f64> = map_chunks(1000, 32, f).into_iter().flatten().collect();
        let b: Vec<f64> = map_chunks_seq(1000, 32, f).into_iter().flatten().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn reduce_order_is_fixed() {
        let chunks = vec![vec![1.0e-16, 1.0], vec![1.0, 2.0], vec![-1.0, 3.0]];
        let mut acc = vec![0.0; 2];
        reduce_in_order(&mut acc, chunks.clone());
        let mut expect = vec![0.0; 2];
        for c in &chunks {
            expect[0] += c[0];
            expect[1] += c[1];
        }
        assert_eq!(acc, expect);
    }
}
