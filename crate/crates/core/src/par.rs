//! Order-preserving map over slices, parallel when the `parallel` feature is
//! enabled and sequential otherwise. Results always come back in input
//! order, so reductions over them are identical in either mode.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

pub(crate) fn map_indexed<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

pub(crate) fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` on a pool of `workers` threads (parallel builds only).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
        {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

/// Index-ordered pairwise sum; the association depends only on the length.
pub(crate) fn ordered_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let (a, b) = values.split_at(values.len() / 2);
    ordered_sum(a) + ordered_sum(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maps_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = map_indexed(exec, &items, |i, v| (i as u64) * 10 + v);
            assert_eq!(out, (0..1000).map(|i| i * 11).collect::<Vec<_>>());
            assert_eq!(map_range(exec, 5, |i| i * 2), vec![0, 2, 4, 6, 8]);
        }
    }

    #[test]
    fn worker_pool_runs_closure() {
        let v = with_workers(2, || map_range(Execution::Parallel, 100, |i| i as f64));
        assert_eq!(ordered_sum(&v), 4950.0);
        assert_eq!(with_workers(0, || 7), 7);
    }

    #[test]
    fn ordered_sum_small_cases() {
        assert_eq!(ordered_sum(&[]), 0.0);
        assert_eq!(ordered_sum(&[1.5]), 1.5);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(ordered_sum(&v), 210.0);
    }

    proptest! {
        #[test]
        fn ordered_sum_close_to_exact(v in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
            let exact: f64 = v.iter().sum();
            prop_assert!((ordered_sum(&v) - exact).abs() <= 1e-9);
        }
    }
}
