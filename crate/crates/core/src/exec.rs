//! Execution strategy for data-parallel loops.
//!
//! Every parallel loop in the crate maps over a slice and collects results in
//! input order; reductions happen afterwards in a fixed sequential order. The
//! parallel and sequential paths are therefore bit-identical.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    /// Uses rayon when the `parallel` feature is compiled in; otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

static STRATEGY: AtomicU8 = AtomicU8::new(1);

pub fn set_strategy(strategy: Strategy) {
    let v = match strategy {
        Strategy::Sequential => 0,
        Strategy::Parallel => 1,
    };
    STRATEGY.store(v, Ordering::Relaxed);
}

pub fn strategy() -> Strategy {
    match STRATEGY.load(Ordering::Relaxed) {
        0 => Strategy::Sequential,
        _ => Strategy::Parallel,
    }
}

/// True when loops will actually be spread over a thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && strategy() == Strategy::Parallel
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if strategy() == Strategy::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if strategy() == Strategy::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Fallible map; returns the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_under_both_strategies() {
        let xs: Vec<u64> = (0..1000).collect();
        set_strategy(Strategy::Sequential);
        let a = map(&xs, |x| x * x);
        set_strategy(Strategy::Parallel);
        let b = map(&xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
