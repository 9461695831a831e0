//! Sequential/parallel dispatch helpers.
//!
//! Every call site hands over independent per-index work; outputs are
//! collected in index order and no task shares mutable state with another,
//! so the parallel and sequential builds produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    (0..n).map(f).collect()
}

/// Runs `f` on each (index, chunk) of `data` split into `chunk_len` pieces.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(idx, chunk)| f(idx, chunk));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    for (idx, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(idx, chunk);
    }
}

/// Maps `f` over disjoint chunk pairs drawn from two buffers at once: for
/// pair `(a, b)`, the closure receives chunks `a` and `b` of `data1` (length
/// `len1`) and chunks `a` and `b` of `data2` (length `len2`).
///
/// This is the access pattern of one round of one-sided Jacobi rotations:
/// each task owns two columns of the factor matrix and the matching two
/// columns of the rotation accumulator. The pair list must be disjoint.
pub(crate) fn map_disjoint_pairs2<R, F>(
    data1: &mut [f64],
    len1: usize,
    data2: &mut [f64],
    len2: usize,
    pairs: &[(usize, usize)],
    f: F,
) -> Vec<R>
where
    R: Send,
    F: Fn(&mut [f64], &mut [f64], &mut [f64], &mut [f64]) -> R + Sync,
{
    debug_assert!(disjoint(pairs));
    #[cfg(feature = "parallel")]
    {
        let base1 = SendPtr(data1.as_mut_ptr());
        let base2 = SendPtr(data2.as_mut_ptr());
        pairs
            .par_iter()
            .map(|&(a, b)| {
                // Safety: pairs are pairwise disjoint chunk indices, so no
                // two tasks alias the same memory.
                unsafe {
                    let a1 = std::slice::from_raw_parts_mut(base1.0.add(a * len1), len1);
                    let b1 = std::slice::from_raw_parts_mut(base1.0.add(b * len1), len1);
                    let a2 = std::slice::from_raw_parts_mut(base2.0.add(a * len2), len2);
                    let b2 = std::slice::from_raw_parts_mut(base2.0.add(b * len2), len2);
                    f(a1, b1, a2, b2)
                }
            })
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs
            .iter()
            .map(|&(a, b)| unsafe {
                let p1 = data1.as_mut_ptr();
                let p2 = data2.as_mut_ptr();
                let a1 = std::slice::from_raw_parts_mut(p1.add(a * len1), len1);
                let b1 = std::slice::from_raw_parts_mut(p1.add(b * len1), len1);
                let a2 = std::slice::from_raw_parts_mut(p2.add(a * len2), len2);
                let b2 = std::slice::from_raw_parts_mut(p2.add(b * len2), len2);
                f(a1, b1, a2, b2)
            })
            .collect()
    }
}

fn disjoint(pairs: &[(usize, usize)]) -> bool {
    let mut seen = std::collections::HashSet::new();
    pairs.iter().all(|&(a, b)| a != b && seen.insert(a) && seen.insert(b))
}

#[cfg(feature = "parallel")]
#[derive(Clone, Copy)]
struct SendPtr<T>(*mut T);

#[cfg(feature = "parallel")]
unsafe impl<T> Send for SendPtr<T> {}
#[cfg(feature = "parallel")]
unsafe impl<T> Sync for SendPtr<T> {}
