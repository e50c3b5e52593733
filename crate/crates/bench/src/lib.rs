//! Shared inputs for the criterion benchmarks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use structevo::ann::random_genome;
use structevo::{ArchSpec, Genome, RetinaTask};

/// Random retina genomes at mixed densities, reproducible from `seed`.
pub fn genomes(count: usize, seed: u64) -> Vec<Genome> {
    let arch = Arc::new(ArchSpec::retina());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|k| random_genome(&mut rng, &arch, 0.1 + 0.4 * (k % 5) as f64 / 4.0)).collect()
}

/// The default modular retina task.
pub fn task() -> RetinaTask {
    structevo::retina::parse_task(include_str!("../../../data/retina_default.txt")).expect("bundled pattern file")
}
