//! Data-parallel execution with a sequential fallback.
//!
//! Building without the `parallel` feature removes the rayon dependency
//! entirely; `ExecMode::Parallel` then degrades to the sequential path.
//! Every parallel site maps independent indices and collects in index
//! order, so output is bitwise identical across modes and thread counts.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

/// Sets the crate-wide default mode (used by model internals); explicit
/// `ExecMode` arguments on public operations take precedence.
pub fn set_default_mode(mode: ExecMode) {
    MODE.store(mode as u8, Ordering::Relaxed);
}

pub fn default_mode() -> ExecMode {
    match MODE.load(Ordering::Relaxed) {
        0 => ExecMode::Sequential,
        _ => ExecMode::Parallel,
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Maps `f` over the items of a slice, returning results in item order.
pub fn map_slice<'a, I, T, F>(mode: ExecMode, items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Send + Sync,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_index_order() {
        let seq = map_indexed(ExecMode::Sequential, 1000, |i| i * i);
        let par = map_indexed(ExecMode::Parallel, 1000, |i| i * i);
        assert_eq!(seq, par);
    }
}
