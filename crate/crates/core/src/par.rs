//! Order-preserving data-parallel helpers.
//!
//! Every batch operation in the crate (per-view rasterization, per-view
//! evidence accumulation, per-facet prior lookup, per-edge geometry) goes
//! through [`Exec`]. With the `parallel` feature the work is spread over the
//! rayon pool; without it, or with [`Exec::Sequential`], the same closures
//! run in a plain loop. Results always come back in input order and every
//! floating-point reduction is done sequentially afterwards, so both paths
//! produce bit-identical output.

/// Execution strategy for batch loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Falls back to [`Exec::Sequential`] when the `parallel` feature is off.
    #[default]
    Parallel,
}

impl Exec {
    /// `jobs == 1` selects the sequential path; anything else the parallel one.
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills `out` in chunks of `chunk` elements; `f` receives the chunk index.
    pub fn fill_chunks<R, F>(self, out: &mut [R], chunk: usize, f: F)
    where
        R: Send,
        F: Fn(usize, &mut [R]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Runs `op` with at most `workers` threads (0 = library default).
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(op);
        }
    }
    let _ = workers;
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = Exec::Sequential.map(&items, |x| x * x);
        let b = Exec::Parallel.map(&items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(
            Exec::Parallel.map_range(10, |i| i),
            (0..10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn chunk_fill_matches() {
        let mut a = vec![0usize; 103];
        let mut b = vec![0usize; 103];
        Exec::Sequential.fill_chunks(&mut a, 10, |ci, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = ci * 10 + j;
            }
        });
        Exec::Parallel.fill_chunks(&mut b, 10, |ci, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = ci * 10 + j;
            }
        });
        assert_eq!(a, b);
        assert_eq!(a[102], 102);
    }

    #[test]
    fn jobs_mapping() {
        assert_eq!(Exec::from_jobs(1), Exec::Sequential);
        assert_eq!(Exec::from_jobs(0), Exec::Parallel);
        assert_eq!(Exec::from_jobs(8), Exec::Parallel);
    }
}
