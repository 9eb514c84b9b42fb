//! Synthetic instances shared by the benchmarks.

use std::sync::Arc;

use falcon_core::{Budgets, GroupStructure, GroupedInstance, ProblemBundle};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `l` near-equal contiguous groups over `p` parameters with costs in `[1, 100)`.
pub fn random_groups(rng: &mut impl Rng, p: usize, l: usize) -> GroupStructure {
    let l = l.clamp(1, p.max(1));
    let offsets = (0..=l).map(|j| j * p / l).collect();
    let costs = (0..l).map(|_| rng.gen_range(1.0..100.0)).collect();
    GroupStructure::new(offsets, costs).expect("valid groups")
}

/// Importances drawn as squared standard-ish normals.
pub fn random_instance(rng: &mut impl Rng, p: usize, l: usize) -> GroupedInstance {
    let groups = random_groups(rng, p, l);
    let importance = (0..p)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
            x * x
        })
        .collect();
    GroupedInstance::new(groups, importance).expect("valid instance")
}

/// Joint budgets at the given fractions of the dense NNZ and FLOP totals.
pub fn fraction_budgets(groups: &GroupStructure, nnz: f64, flops: f64) -> Budgets {
    Budgets::joint(
        (groups.len() as f64 * nnz).round() as usize,
        groups.dense_flops() * flops,
    )
}

/// Bundle with `l` groups (blocks equal to groups) and `n` random sample rows.
pub fn random_bundle(rng: &mut impl Rng, p: usize, n: usize, l: usize) -> ProblemBundle {
    let groups = random_groups(rng, p, l);
    let weights = (0..p).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let samples: Vec<f32> = (0..n * p).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    ProblemBundle::with_group_blocks(
        groups.offsets().to_vec(),
        groups.flop_costs().to_vec(),
        weights,
        n,
        Arc::from(samples),
    )
    .expect("valid bundle")
}
