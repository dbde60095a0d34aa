//! Parallel Monte Carlo ensembles. Results depend only on the seed and path count:
//! every path has its own random stream and reductions run in path order.

use rayon::prelude::*;
use walsh_core::spider::stats::PathStats;
use walsh_core::spider::{
    path_value, run_path, EstimatorReport, SimConfig, SpiderModel, StatsConfig, ValueModel,
};
use walsh_core::Result;

/// Environment variable holding the worker-thread count (default: all cores).
pub const THREADS_ENV: &str = "WALSH_THREADS";

/// Runs `f` on a pool sized by [`THREADS_ENV`].
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Streaming statistics for paths `0..paths`, in path order.
pub fn collect_stats<M: SpiderModel + Sync + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    stats: &StatsConfig,
    paths: u64,
) -> Result<Vec<PathStats>> {
    stats.check()?;
    with_pool(|| {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut s = PathStats::new(stats, model.rays(), cfg.x0, cfg.l0);
                run_path(model, cfg, i, &mut s)?;
                Ok(s)
            })
            .collect()
    })
}

/// Monte Carlo value estimate over paths `0..paths`.
pub fn estimate_value_parallel<M: ValueModel + Sync + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    paths: u64,
) -> Result<EstimatorReport> {
    let v: Vec<f64> = with_pool(|| {
        (0..paths)
            .into_par_iter()
            .map(|i| path_value(model, cfg, i))
            .collect::<Result<_>>()
    })?;
    EstimatorReport::from_samples(
        &v,
        vec![("lambda".into(), model.lambda()), ("dt".into(), cfg.dt)],
    )
}
