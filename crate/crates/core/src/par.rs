//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it, or with [`Execution::Sequential`], everything
//! runs on the calling thread. Results are always returned in input order,
//! so both paths produce identical output.

use std::ops::Range;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

fn chunks(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk)).map(|i| i * chunk..((i + 1) * chunk).min(n)).collect()
}

/// Applies `f` to consecutive ranges covering `0..n` and returns the
/// results in range order.
pub fn map_ranges<T, F>(exec: Execution, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let ranges = chunks(n, chunk);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
        _ => ranges.into_iter().map(f).collect(),
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_items<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers. Without the
/// `parallel` feature, or if the pool cannot be built, `f` runs on the
/// calling thread.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        return pool.install(f);
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_input_in_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = map_ranges(exec, 10, 3, |r| r.collect::<Vec<_>>());
            assert_eq!(out.concat(), (0..10).collect::<Vec<_>>());
            assert_eq!(out.len(), 4);
        }
        assert!(map_ranges(Execution::Parallel, 0, 3, |r| r.len()).is_empty());
    }

    #[test]
    fn pools_of_any_size_agree() {
        let run = || map_ranges(Execution::Parallel, 1000, 7, |r| r.map(|i| i * i).sum::<usize>());
        let one = with_threads(1, run);
        assert_eq!(one, with_threads(3, run));
    }
}
