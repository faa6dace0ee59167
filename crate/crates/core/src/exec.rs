//! Execution strategy for data-parallel fan-out points.
//!
//! Client training within a round, batch evaluation, and repetition sweeps
//! are embarrassingly parallel. With the `parallel` feature (default) both
//! strategies are compiled and selectable at runtime, which is what the
//! bench suite compares; without it only the sequential path exists.
//!
//! Results are always collected in input order so reductions downstream see
//! a fixed client-id order regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Execution::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Execution::Sequential
    }
}

impl Execution {
    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Order-preserving map with mutable access, one result per item.
    pub fn map_mut<T, R, F>(self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(&mut T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter_mut().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter_mut().map(f).collect(),
        }
    }

    /// Order-preserving map over an index range.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..64).collect();
        let seq = Execution::Sequential.map(&items, |&x| x * x);
        assert_eq!(seq, items.iter().map(|&x| x * x).collect::<Vec<_>>());
        #[cfg(feature = "parallel")]
        {
            let par = Execution::Parallel.map(&items, |&x| x * x);
            assert_eq!(par, seq);
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn map_mut_parallel_matches_sequential() {
        let mut a: Vec<u64> = (0..50).collect();
        let mut b = a.clone();
        let ra = Execution::Sequential.map_mut(&mut a, |x| {
            *x += 1;
            *x * 2
        });
        let rb = Execution::Parallel.map_mut(&mut b, |x| {
            *x += 1;
            *x * 2
        });
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}
