//! Replica-level parallelism with results identical at any worker count:
//! replica i draws all its randomness from streams keyed by i, and results
//! come back in replica order, so the merge is a sequential fold over a Vec
//! whose contents never depend on scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Run `f(replica_index)` for indices 0..replicas on `workers` threads
/// (0 = one per core). The returned Vec is in replica order regardless of the
/// worker count; any replica error aborts the run.
pub fn run_replicas<T, F>(replicas: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| (0..replicas).into_par_iter().map(&f).collect::<Result<Vec<T>>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_replica_index_at_any_worker_count() {
        for workers in [1, 2, 5] {
            let out = run_replicas(100, workers, Ok).unwrap();
            assert_eq!(out, (0..100).collect::<Vec<u64>>());
        }
    }

    #[test]
    fn replica_error_aborts() {
        let res = run_replicas(10, 2, |i| {
            if i == 7 {
                Err(Error::InvalidArgument("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(res.is_err());
    }

    #[test]
    fn zero_replicas_rejected() {
        assert!(run_replicas(0, 1, Ok).is_err());
    }
}
