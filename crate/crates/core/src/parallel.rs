//! Data-parallel helpers. Both paths use identical chunking and merge chunks
//! in index order, so the `parallel` feature never changes results — only
//! wall-clock time.

use std::ops::Range;

/// Chunk width for gradient accumulation. Fixed so that float summation
/// order is independent of thread count and of the `parallel` feature.
pub const GRAD_CHUNK: usize = 16;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|i| (i * chunk)..((i + 1) * chunk).min(n))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    use rayon::prelude::*;
    chunk_ranges(n, chunk).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Always-sequential variant with the same chunking; kept so benches can
/// compare both paths inside one build.
pub fn map_chunks_seq<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}
