use rayon::prelude::*;
use tasep_core::estimators::ReplicaRunner;

/// Runs replicas on the current rayon pool; results stay in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonRunner;

impl ReplicaRunner for RayonRunner {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).into_par_iter().map(f).collect()
    }
}

/// Thread count from the command line, the config, `TASEP_LAB_THREADS`, or
/// the available parallelism, in that order.
pub fn resolve_threads(cli: Option<usize>, config: Option<usize>) -> usize {
    cli.or(config)
        .or_else(|| std::env::var("TASEP_LAB_THREADS").ok()?.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}
