//! Execution strategy for the data-parallel kernels.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] spreads
//! independent output rows over the current rayon pool. Without it every
//! strategy runs sequentially. Per-row work is identical in both modes, so
//! results are bitwise equal regardless of strategy or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
const MIN_TASK_ELEMS: usize = 4096;

/// Selects serial or row-parallel evaluation of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Serial
        }
    }
}

impl Execution {
    /// Calls `f(row_index, row)` for every `width`-sized chunk of `data`.
    pub fn for_each_row<T, F>(self, data: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => data
                .par_chunks_mut(width)
                .with_min_len((MIN_TASK_ELEMS / width).max(1))
                .enumerate()
                .for_each(|(i, row)| f(i, row)),
            _ => data
                .chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row)),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}
