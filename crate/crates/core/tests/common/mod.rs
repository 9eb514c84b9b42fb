#![allow(dead_code)]

use std::sync::Arc;

use falcon_core::{Budgets, GroupStructure, GroupedInstance, LowRankQuadratic, Mask, ProblemBundle};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random contiguous groups with sizes summing to `p`.
pub fn random_groups(rng: &mut impl Rng, p: usize, l_max: usize) -> GroupStructure {
    let l = rng.gen_range(1..=l_max.min(p));
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < l - 1 {
        let c = rng.gen_range(1..p);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut offsets = vec![0];
    offsets.extend(cuts);
    offsets.push(p);
    let integer_costs = rng.gen_bool(0.5);
    let costs = (0..l)
        .map(|_| {
            if integer_costs {
                f64::from(rng.gen_range(1u32..6))
            } else {
                rng.gen_range(0.2..5.0)
            }
        })
        .collect();
    GroupStructure::new(offsets, costs).unwrap()
}

/// Importances mixing ties (small integers), exact zeros and continuous values.
pub fn random_instance(rng: &mut impl Rng, p_max: usize, l_max: usize) -> GroupedInstance {
    let p = rng.gen_range(1..=p_max);
    let groups = random_groups(rng, p, l_max);
    let integer = rng.gen_bool(0.4);
    let importance = (0..p)
        .map(|_| {
            if rng.gen_bool(0.1) {
                0.0
            } else if integer {
                f64::from(rng.gen_range(0u32..8))
            } else {
                rng.gen_range(0.0..10.0)
            }
        })
        .collect();
    GroupedInstance::new(groups, importance).unwrap()
}

/// Joint budgets with `1 <= S <= p` and `F` between the cheapest cost and the
/// dense total.
pub fn random_budgets(rng: &mut impl Rng, groups: &GroupStructure) -> Budgets {
    let p = groups.len();
    let s = rng.gen_range(1..=p);
    let min_cost = groups.flop_costs().iter().copied().fold(f64::INFINITY, f64::min);
    let f = rng.gen_range(min_cost..=groups.dense_flops());
    Budgets::joint(s, f)
}

/// Dual value computed from the materialised shifted vector.
pub fn naive_dual(inst: &GroupedInstance, s: usize, f: f64, l1: f64, l2: f64) -> f64 {
    let costs = inst.groups.per_parameter_costs();
    let pos: f64 = inst
        .importance
        .iter()
        .zip(&costs)
        .map(|(&i, &c)| (i - l1 - c * l2).max(0.0))
        .sum();
    s as f64 * l1 + f * l2 + pos
}

/// `(g, lambda1*)` from a full sort of `I - lambda2 f`.
pub fn naive_g(inst: &GroupedInstance, s: usize, f: f64, l2: f64) -> (f64, f64) {
    let costs = inst.groups.per_parameter_costs();
    let mut v: Vec<f64> = inst
        .importance
        .iter()
        .zip(&costs)
        .map(|(&i, &c)| i - l2 * c)
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let l1 = if s >= v.len() { 0.0 } else { v[s - 1].max(0.0) };
    (naive_dual(inst, s, f, l1, l2), l1)
}

/// Minimum of the convex piecewise-linear `g` over `[0, hi]`: the smaller of
/// (a) the best kink, enumerated from all pairwise crossings and zero
/// crossings of `I_i - lambda2 f_i`, and (b) a ten-level refined grid search.
pub fn reference_g_min(inst: &GroupedInstance, s: usize, f: f64) -> f64 {
    let costs = inst.groups.per_parameter_costs();
    let hi = inst
        .importance
        .iter()
        .zip(&costs)
        .map(|(i, c)| i / c)
        .fold(0.0, f64::max);
    let g = |l2: f64| naive_g(inst, s, f, l2).0;

    let mut kinks = vec![0.0, hi];
    for a in 0..inst.len() {
        kinks.push(inst.importance[a] / costs[a]);
        for b in 0..a {
            if costs[a] != costs[b] {
                let x = (inst.importance[a] - inst.importance[b]) / (costs[a] - costs[b]);
                if x > 0.0 && x < hi {
                    kinks.push(x);
                }
            }
        }
    }
    let by_kinks = kinks.into_iter().map(g).fold(f64::INFINITY, f64::min);

    let (mut lo, mut up) = (0.0, hi);
    let mut best = f64::INFINITY;
    for _ in 0..10 {
        let pts = 200;
        let step = (up - lo) / pts as f64;
        let mut arg = lo;
        for k in 0..=pts {
            let x = lo + step * k as f64;
            let v = g(x);
            if v < best {
                best = v;
                arg = x;
            }
        }
        lo = (arg - step).max(0.0);
        up = (arg + step).min(hi);
    }
    by_kinks.min(best)
}

/// Exhaustive optimum over all masks by direct evaluation (no Gray code).
pub fn exhaustive_optimum(inst: &GroupedInstance, b: &Budgets) -> f64 {
    let p = inst.len();
    assert!(p <= 16);
    let costs = inst.groups.per_parameter_costs();
    let mut best = 0.0f64;
    for code in 0u32..(1 << p) {
        let (mut nnz, mut flops, mut obj) = (0usize, 0.0, 0.0);
        for i in 0..p {
            if code >> i & 1 == 1 {
                nnz += 1;
                flops += costs[i];
                obj += inst.importance[i];
            }
        }
        if b.nnz.is_none_or(|s| nnz <= s) && b.flops.is_none_or(|f| flops <= f + 1e-12) {
            best = best.max(obj);
        }
    }
    best
}

/// Smallest `||x - xbar||^2` over feasible supports, by enumeration.
pub fn brute_projection_distance(xbar: &[f64], groups: &GroupStructure, b: &Budgets) -> f64 {
    let p = xbar.len();
    let costs = groups.per_parameter_costs();
    let total: f64 = xbar.iter().map(|v| v * v).sum();
    let mut best = total;
    for code in 0u32..(1 << p) {
        let (mut nnz, mut flops, mut kept) = (0usize, 0.0, 0.0);
        for i in 0..p {
            if code >> i & 1 == 1 {
                nnz += 1;
                flops += costs[i];
                kept += xbar[i] * xbar[i];
            }
        }
        if b.admits(nnz, flops) {
            best = best.min(total - kept);
        }
    }
    best
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub struct RandomProblem {
    pub bundle: ProblemBundle,
    pub groups: GroupStructure,
    pub model: LowRankQuadratic,
}

/// Bundle with random weights and samples, blocks equal to groups.
pub fn random_bundle(rng: &mut impl Rng, p: usize, n: usize, l_max: usize) -> ProblemBundle {
    let groups = random_groups(rng, p, l_max);
    let weights = (0..p)
        .map(|_| {
            if rng.gen_bool(0.05) {
                0.0
            } else {
                rng.gen_range(-1.0f32..1.0)
            }
        })
        .collect();
    let samples: Vec<f32> = (0..n * p).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    ProblemBundle::with_group_blocks(
        groups.offsets().to_vec(),
        groups.flop_costs().to_vec(),
        weights,
        n,
        Arc::from(samples),
    )
    .unwrap()
}

pub fn random_problem(
    rng: &mut impl Rng,
    p: usize,
    n: usize,
    l_max: usize,
    bsize: usize,
    rho: f64,
    lambda: f64,
) -> RandomProblem {
    let bundle = random_bundle(rng, p, n, l_max);
    let groups = bundle.groups();
    let model = LowRankQuadratic::from_bundle(&bundle, lambda, rho, bsize).unwrap();
    RandomProblem {
        bundle,
        groups,
        model,
    }
}

/// `rho * blockdiag(X_B' X_B)` as a dense matrix.
pub fn dense_hessian(m: &LowRankQuadratic) -> Vec<Vec<f64>> {
    let (p, n) = (m.p(), m.n());
    let x = m.samples();
    let mut h = vec![vec![0.0; p]; p];
    for j in 0..m.num_blocks() {
        let r = m.block_range(j);
        for a in r.clone() {
            for b in r.clone() {
                h[a][b] = m.rho()
                    * (0..n)
                        .map(|k| f64::from(x[k * p + a]) * f64::from(x[k * p + b]))
                        .sum::<f64>();
            }
        }
    }
    h
}

pub fn dense_objective(m: &LowRankQuadratic, h: &[Vec<f64>], w: &[f64]) -> f64 {
    let d: Vec<f64> = w.iter().zip(m.w_bar()).map(|(a, b)| a - b).collect();
    let lin: f64 = m.g().iter().zip(&d).map(|(a, b)| a * b).sum();
    let quad: f64 = (0..d.len())
        .map(|a| d[a] * (0..d.len()).map(|b| h[a][b] * d[b]).sum::<f64>())
        .sum();
    let sq: f64 = d.iter().map(|v| v * v).sum();
    lin + 0.5 * quad + 0.5 * m.ridge() * sq
}

pub fn dense_gradient(m: &LowRankQuadratic, h: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = w.iter().zip(m.w_bar()).map(|(a, b)| a - b).collect();
    (0..d.len())
        .map(|a| {
            m.g()[a] + (0..d.len()).map(|b| h[a][b] * d[b]).sum::<f64>() + m.ridge() * d[a]
        })
        .collect()
}

pub fn feasible(groups: &GroupStructure, b: &Budgets, w: &[f64]) -> bool {
    let s = Mask::support_of(w);
    b.admits(s.nnz(), groups.flops_of(&s))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
