//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper writes into disjoint output chunks or collects results in
//! index order, so outputs are bitwise independent of the thread count.
//! Without the `parallel` feature, [`Execution::Parallel`] runs sequentially.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Calls `f(chunk_index, chunk)` for each `chunk_len`-sized chunk of `data`.
pub fn for_each_chunk<T, F>(exec: Execution, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0, "chunk length must be positive");
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
        }
        _ => data
            .chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_match_between_modes() {
        let mut a = vec![0usize; 37];
        let mut b = vec![0usize; 37];
        let fill = |i: usize, c: &mut [usize]| {
            for (k, v) in c.iter_mut().enumerate() {
                *v = i * 100 + k;
            }
        };
        for_each_chunk(Execution::Sequential, &mut a, 5, fill);
        for_each_chunk(Execution::Parallel, &mut b, 5, fill);
        assert_eq!(a, b);
        assert_eq!(
            map_indexed(Execution::Parallel, 10, |i| i * i),
            map_indexed(Execution::Sequential, 10, |i| i * i)
        );
    }
}
