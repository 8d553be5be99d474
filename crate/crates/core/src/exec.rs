//! Execution mode for the data-parallel inner loops.
//!
//! The per-window channel sweep in [`crate::fdia`], window streaming, and the
//! evaluation score loops are independent per item and merge results by index,
//! so parallel and sequential execution produce identical output. The
//! `parallel` feature (default) enables a rayon-backed mode; without it only
//! sequential execution exists. Training is always sequential: parameter
//! updates are order-dependent and the determinism contract pins them.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run an independent-per-item loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Applies `f` to `0..n` and collects results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree_in_order() {
        let seq = map_indexed(ExecMode::Sequential, 100, |i| i * i);
        assert_eq!(seq, (0..100).map(|i| i * i).collect::<Vec<_>>());
        #[cfg(feature = "parallel")]
        {
            let par = map_indexed(ExecMode::Parallel, 100, |i| i * i);
            assert_eq!(seq, par);
        }
    }
}
