//! Trial-level execution. Results come back in trial order whatever the
//! schedule, and every trial seeds its own RNG, so output does not depend on
//! the worker count.

use crate::Result;

/// How trials are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon pool with `workers` threads (`None` = all cores). Falls back to
    /// sequential when the `parallel` feature is off.
    #[default]
    Parallel,
    ParallelWith(usize),
}

impl Execution {
    /// `Some(1)` maps to sequential, `Some(k)` to a `k`-thread pool.
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(0) | None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(k) => Execution::ParallelWith(k),
        }
    }
}

pub fn map_trials<T, F>(trials: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => map_sequential(trials, f),
        #[cfg(feature = "parallel")]
        Execution::Parallel => map_parallel(trials, None, f),
        #[cfg(feature = "parallel")]
        Execution::ParallelWith(k) => map_parallel(trials, Some(k), f),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::ParallelWith(_) => map_sequential(trials, f),
    }
}

fn map_sequential<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..trials).map(f).collect()
}

#[cfg(feature = "parallel")]
fn map_parallel<T, F>(trials: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let run = || (0..trials).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        None => run(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| crate::Error::config(format!("cannot start {k} workers: {e}")))?
            .install(run),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_schedule_independent() {
        let f = |i: usize| Ok(i * i);
        let seq = map_trials(1000, Execution::Sequential, f).unwrap();
        for exec in [Execution::Parallel, Execution::ParallelWith(3)] {
            assert_eq!(map_trials(1000, exec, f).unwrap(), seq);
        }
    }

    #[test]
    fn first_error_surfaces() {
        let f = |i: usize| {
            if i == 17 {
                Err(crate::Error::config("boom"))
            } else {
                Ok(i)
            }
        };
        assert!(map_trials(100, Execution::ParallelWith(4), f).is_err());
        assert!(map_trials(100, Execution::Sequential, f).is_err());
    }

    #[test]
    fn worker_mapping() {
        assert_eq!(Execution::from_workers(Some(1)), Execution::Sequential);
        assert_eq!(Execution::from_workers(None), Execution::Parallel);
        assert_eq!(Execution::from_workers(Some(8)), Execution::ParallelWith(8));
    }
}
