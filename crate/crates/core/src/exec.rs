//! Execution mode for the data-parallel inner loops.
//!
//! Every parallel path here produces bitwise the same result as its sequential
//! counterpart: work is split into fixed chunks, and partial results are always
//! combined in chunk order on the calling thread.

/// Chunk length used by [`Exec::chunked_sum`]. Fixed so that results do not
/// depend on the thread count.
pub const SUM_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon-backed. Falls back to sequential execution when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Ordered map over `0..n`.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills `out[i] = f(i)`.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }

    /// Sums `dim`-vectors produced by `add(i, acc)` for `i in 0..n`.
    ///
    /// Items are accumulated sequentially inside chunks of [`SUM_CHUNK`]; chunk
    /// partials are added left to right.
    pub fn chunked_sum<F>(self, n: usize, dim: usize, add: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let chunks = n.div_ceil(SUM_CHUNK);
        let partial = |c: usize| {
            let mut acc = vec![0.0; dim];
            let end = ((c + 1) * SUM_CHUNK).min(n);
            for i in c * SUM_CHUNK..end {
                add(i, &mut acc);
            }
            acc
        };
        let partials = self.map(chunks, partial);
        let mut total = vec![0.0; dim];
        for p in &partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }
}
