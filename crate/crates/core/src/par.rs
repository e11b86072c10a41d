//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through [`map_range`], which
//! collects results in index order. No floating-point reduction is ever
//! performed across threads, so outputs are bit-identical whichever
//! policy runs them.

/// How an inner loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Rayon work-stealing over the current pool. Falls back to
    /// sequential when the `parallel` feature is disabled.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Evaluates `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_range`] but over a slice.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(
            map_range(Exec::Sequential, 1000, f),
            map_range(Exec::Parallel, 1000, f)
        );
        let xs: Vec<u32> = (0..50).collect();
        assert_eq!(
            map_slice(Exec::Sequential, &xs, |x| x * 3),
            map_slice(Exec::Parallel, &xs, |x| x * 3)
        );
    }
}
