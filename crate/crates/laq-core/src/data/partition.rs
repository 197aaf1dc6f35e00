//! Splitting a dataset across workers, deterministically under a seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Shuffle, then split as evenly as possible (shard sizes differ by ≤ 1).
    Uniform,
    /// Seeded random proportions with a floor of one sample per worker.
    Heterogeneous,
}

/// Row indices per worker. Shards are disjoint and cover `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub shards: Vec<Vec<usize>>,
    pub mode: PartitionMode,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn num_workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.len()).collect()
    }
}

/// Splits `n` samples across `workers` shards.
pub fn partition(
    n: usize,
    workers: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<PartitionPlan, DataError> {
    if workers == 0 || workers > n {
        return Err(DataError::TooManyWorkers {
            workers,
            samples: n,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);

    let sizes = match mode {
        PartitionMode::Uniform => {
            let base = n / workers;
            let extra = n % workers;
            (0..workers)
                .map(|m| if m < extra { base + 1 } else { base })
                .collect::<Vec<_>>()
        }
        PartitionMode::Heterogeneous => heterogeneous_sizes(n, workers, &mut rng),
    };

    let mut shards = Vec::with_capacity(workers);
    let mut cursor = 0;
    for size in sizes {
        shards.push(indices[cursor..cursor + size].to_vec());
        cursor += size;
    }
    debug_assert_eq!(cursor, n);

    Ok(PartitionPlan { shards, mode, seed })
}

/// Exponential draws normalized into proportions, floored at one sample per
/// worker; leftovers go to the largest fractional remainders.
fn heterogeneous_sizes(n: usize, workers: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let draws: Vec<f64> = (0..workers)
        .map(|_| -(rng.gen_range(1e-12..1.0f64)).ln())
        .collect();
    let total: f64 = draws.iter().sum();
    let spare = (n - workers) as f64;

    let raw: Vec<f64> = draws.iter().map(|w| w / total * spare).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| 1 + r.floor() as usize).collect();
    let mut leftover = n - sizes.iter().sum::<usize>();

    let mut order: Vec<usize> = (0..workers).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &m in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[m] += 1;
        leftover -= 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn one_sample_per_worker() {
        let plan = partition(10, 10, PartitionMode::Uniform, 0).unwrap();
        assert_eq!(plan.shard_sizes(), vec![1; 10]);
    }

    #[test]
    fn uneven_uniform_split() {
        let plan = partition(11, 2, PartitionMode::Uniform, 0).unwrap();
        assert_eq!(plan.shard_sizes(), vec![6, 5]);
    }

    #[test]
    fn same_seed_gives_identical_plans() {
        for mode in [PartitionMode::Uniform, PartitionMode::Heterogeneous] {
            let a = partition(100, 7, mode, 42).unwrap();
            let b = partition(100, 7, mode, 42).unwrap();
            assert_eq!(a, b);
            let c = partition(100, 7, mode, 43).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn shards_are_disjoint_and_cover_everything() {
        for mode in [PartitionMode::Uniform, PartitionMode::Heterogeneous] {
            let plan = partition(53, 6, mode, 9).unwrap();
            let mut seen = BTreeSet::new();
            for shard in &plan.shards {
                assert!(!shard.is_empty());
                for &row in shard {
                    assert!(seen.insert(row), "row {row} appears twice");
                }
            }
            assert_eq!(seen.len(), 53);
            assert_eq!(*seen.iter().next_back().unwrap(), 52);
        }
    }

    #[test]
    fn heterogeneous_respects_the_floor() {
        let plan = partition(20, 8, PartitionMode::Heterogeneous, 1).unwrap();
        assert!(plan.shard_sizes().iter().all(|&s| s >= 1));
        assert_eq!(plan.shard_sizes().iter().sum::<usize>(), 20);
        // Worker loads actually differ.
        let sizes = plan.shard_sizes();
        assert!(sizes.iter().any(|&s| s != sizes[0]));
    }

    #[test]
    fn more_workers_than_samples_is_rejected() {
        assert!(matches!(
            partition(3, 4, PartitionMode::Uniform, 0),
            Err(DataError::TooManyWorkers { .. })
        ));
        assert!(matches!(
            partition(3, 0, PartitionMode::Uniform, 0),
            Err(DataError::TooManyWorkers { .. })
        ));
    }
}
