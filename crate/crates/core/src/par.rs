//! Data-parallel helpers. With the `parallel` feature (default) the mapping
//! helpers fan out over rayon; without it they fall back to sequential loops.
//!
//! All helpers preserve item order, and callers reduce their outputs in a
//! fixed order, so results are bit-identical regardless of thread count or
//! feature selection.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, preserving order.
#[cfg(feature = "parallel")]
pub fn map_vec<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_vec<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Sequential reference path; always available so benches can compare.
pub fn map_vec_seq<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Map over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<U: Send, F: Fn(usize) -> U + Sync + Send>(n: usize, f: F) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

pub fn map_range_seq<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Apply `f(chunk_index, chunk)` to consecutive chunks of `data`.
/// Chunk boundaries depend only on `chunk_len`, never on thread count.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T: Send, F: Fn(usize, &mut [T]) + Sync + Send>(
    data: &mut [T],
    chunk_len: usize,
    f: F,
) {
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F: Fn(usize, &mut [T])>(data: &mut [T], chunk_len: usize, f: F) {
    for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}

pub fn for_each_chunk_mut_seq<T, F: Fn(usize, &mut [T])>(data: &mut [T], chunk_len: usize, f: F) {
    for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e3779b97f4a7c15).rotate_left(17);
        assert_eq!(map_vec(&items, f), map_vec_seq(&items, f));
    }

    #[test]
    fn chunked_writes_cover_all_elements() {
        let mut a = vec![0usize; 103];
        for_each_chunk_mut(&mut a, 10, |i, chunk| {
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = i * 10 + j;
            }
        });
        assert!(a.iter().enumerate().all(|(i, &v)| i == v));
    }
}
