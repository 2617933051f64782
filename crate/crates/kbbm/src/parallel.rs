//! Thread-pool fan-out. Work is always cut into the same pieces, whatever
//! the thread count, and results are gathered in index order, so outputs do
//! not depend on how many workers ran.

use anyhow::Result;
use kbbm_core::sim::{CapHit, Dynamics, Particle, WindowOutcome, WindowRunner};
use rayon::prelude::*;
use rayon::ThreadPool;

pub const DEFAULT_CHUNK_SIZE: usize = 2048;

/// A pool with `threads` workers; 0 means one per core.
pub fn pool(threads: usize) -> Result<ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Evolves fixed-size particle chunks in parallel inside the current pool.
#[derive(Debug, Clone, Copy)]
pub struct ChunkedRunner {
    pub chunk_size: usize,
}

impl WindowRunner for ChunkedRunner {
    fn run_window(&self, dynamics: &Dynamics<'_>, particles: &[Particle], from: f64, to: f64) -> Result<WindowOutcome, CapHit> {
        if particles.len() <= self.chunk_size {
            return dynamics.evolve_chunk(particles, from, to);
        }
        let parts: Vec<Result<WindowOutcome, CapHit>> = particles
            .par_chunks(self.chunk_size)
            .map(|chunk| dynamics.evolve_chunk(chunk, from, to))
            .collect();
        let mut out = WindowOutcome::default();
        for part in parts {
            out.merge(part?);
            if out.survivors.len() > dynamics.cap() {
                return Err(CapHit);
            }
        }
        Ok(out)
    }
}

/// `f(0), ..., f(n-1)` evaluated on `pool`, in index order.
pub fn map_indexed<T, F>(pool: &ThreadPool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use kbbm_core::sim::Simulation;
    use kbbm_core::{OffspringLaw, SimConfig};

    #[test]
    fn chunking_is_invisible() {
        let config = SimConfig::new(0.3, 1.0, OffspringLaw::binary(), 2.0, vec![1.0, 3.0, 5.0], 12);
        let seq = kbbm_core::sim::simulate(config.clone()).unwrap();
        for threads in [1, 4] {
            let p = pool(threads).unwrap();
            let par = p.install(|| Simulation::new(config.clone()).unwrap().run(&ChunkedRunner { chunk_size: 7 }).unwrap());
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn indexed_map_keeps_order() {
        let p = pool(3).unwrap();
        assert_eq!(map_indexed(&p, 50, |i| i * i), (0..50).map(|i| i * i).collect::<Vec<_>>());
    }
}
