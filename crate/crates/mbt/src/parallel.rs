use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use mbt_core::explorer::LevelMap;

/// Frontier mapping on a dedicated rayon pool. Results keep input order,
/// so exploration output does not depend on the worker count.
pub struct RayonMap {
    pool: ThreadPool,
}

impl RayonMap {
    pub fn new(jobs: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(RayonMap { pool: pool(jobs)? })
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }
}

pub fn pool(jobs: usize) -> Result<ThreadPool, rayon::ThreadPoolBuildError> {
    ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()
}

impl LevelMap for RayonMap {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let map = RayonMap::new(4).unwrap();
        let items: Vec<u32> = (0..1000).collect();
        let out = map.map(&items, &|x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
