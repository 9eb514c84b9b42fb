//! The doubly-constrained selection problem
//!
//! ```text
//! max  sum_i I_i z_i   s.t.  sum_i z_i <= S,  sum_i f_i z_i <= F,  z in {0,1}^p
//! ```
//!
//! solved through its box relaxation. The LP dual
//! `D(l1, l2) = S l1 + F l2 + sum_i max{I_i - l1 - f_i l2, 0}` has a closed-form
//! minimiser in `l1` for fixed `l2` (the S-th largest entry of `I - l2 f`), so
//! the remaining one-dimensional convex function `g(l2)` is minimised by golden
//! section. A primal point is recovered from complementary slackness, made
//! binary by dropping its fractional entries, and then greedily refilled.
//!
//! With `L` groups and `L_f = sum_j f^j`, the rounded mask is within a relative
//! gap of `max{L/S, L_f/F}` of the integer optimum.

use crate::error::{FalconError, Result};
use crate::problem::{Budgets, GroupedInstance, Mask};
use crate::select::GroupedSorted;

/// `(3 - sqrt 5) / 2`.
const GOLDEN_ALPHA: f64 = 0.381_966_011_250_105_15;

/// Largest `p` accepted by [`brute_force_ilp`].
pub const BRUTE_FORCE_MAX_P: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    SparsityOnly,
    FlopOnly,
    Joint,
}

impl SelectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMode::SparsityOnly => "sparsity-only",
            SelectionMode::FlopOnly => "flop-only",
            SelectionMode::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub mask: Mask,
    /// `Q_I` of `mask`.
    pub objective: f64,
    /// Dual (LP) value; bounds the integer optimum from above.
    pub upper_bound: f64,
    /// `max{L/S, L_f/F}`, with a term dropped when its budget is unbounded.
    pub gap_bound: f64,
    pub dual: DualPoint,
    pub mode: SelectionMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlpOptions {
    /// Golden-section tolerance as a fraction of the initial bracket width.
    pub rel_tol: f64,
    /// KKT classification tolerance as a fraction of `max_i I_i`.
    pub kkt_rel_tol: f64,
}

impl Default for IlpOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            kkt_rel_tol: 1e-9,
        }
    }
}

fn require_bounded(b: &Budgets) -> Result<(usize, f64)> {
    match (b.nnz, b.flops) {
        (Some(s), Some(f)) => Ok((s, f)),
        _ => Err(FalconError::Domain(
            "the dual function needs both budgets bounded".into(),
        )),
    }
}

/// `D(lambda1, lambda2)`.
pub fn dual_value(gs: &GroupedSorted, b: &Budgets, lambda1: f64, lambda2: f64) -> Result<f64> {
    let (s, f) = require_bounded(b)?;
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(FalconError::Domain(format!(
            "multipliers must be nonnegative, got ({lambda1}, {lambda2})"
        )));
    }
    Ok(dual_at(gs, s, f, lambda1, lambda2))
}

fn dual_at(gs: &GroupedSorted, s: usize, f: f64, lambda1: f64, lambda2: f64) -> f64 {
    let (pos, _) = gs.positive_part_sum(lambda1, lambda2);
    s as f64 * lambda1 + f * lambda2 + pos
}

/// `g(lambda2) = min_{lambda1 >= 0} D(lambda1, lambda2)` and its minimiser
/// `lambda1* = max{(I - lambda2 f)_(S), 0}` (zero when `S >= p`).
pub fn g_of_lambda2(gs: &GroupedSorted, b: &Budgets, lambda2: f64) -> Result<(f64, f64)> {
    let (s, f) = require_bounded(b)?;
    if !(lambda2 >= 0.0) {
        return Err(FalconError::Domain(format!(
            "lambda2 must be nonnegative, got {lambda2}"
        )));
    }
    Ok(g_at(gs, s, f, lambda2))
}

fn g_at(gs: &GroupedSorted, s: usize, f: f64, lambda2: f64) -> (f64, f64) {
    let lambda1 = if s == 0 || s >= gs.len() {
        // S = 0 pushes lambda1 up until every term vanishes; D is then flat in
        // lambda1 past max_i I_i, so any such value is a minimiser.
        if s == 0 {
            gs.groups()
                .iter()
                .filter_map(|g| g.values.first().map(|&v| v - lambda2 * g.cost))
                .fold(0.0, f64::max)
        } else {
            0.0
        }
    } else {
        gs.shifted_sth_largest(lambda2, s)
            .expect("rank checked above")
            .max(0.0)
    };
    (dual_at(gs, s, f, lambda1, lambda2), lambda1)
}

/// Minimise `g` over `[0, max_i I_i/f_i]` by golden section until the bracket
/// is at most `eps` wide. Among the final bracket's points the lowest value
/// wins, ties going to the smallest `lambda2`.
pub fn solve_dual(gs: &GroupedSorted, b: &Budgets, eps: f64) -> Result<DualPoint> {
    let (s, f) = require_bounded(b)?;
    if !(eps > 0.0) {
        return Err(FalconError::Domain(format!(
            "golden-section tolerance must be positive, got {eps}"
        )));
    }
    let width0 = gs.max_ratio();
    if !(width0 > 0.0) {
        return Err(FalconError::Domain(
            "golden-section search needs a nonzero importance".into(),
        ));
    }
    let point = |lambda2: f64| {
        let (value, lambda1) = g_at(gs, s, f, lambda2);
        DualPoint {
            lambda1,
            lambda2,
            value,
        }
    };

    let shrink = 1.0 - GOLDEN_ALPHA;
    let max_iter = ((width0 / eps).ln() / (1.0 / shrink).ln()).ceil().max(0.0) as usize + 8;

    let (mut lo, mut hi) = (0.0, width0);
    let mut a = point(lo + GOLDEN_ALPHA * (hi - lo));
    let mut c = point(hi - GOLDEN_ALPHA * (hi - lo));
    let mut iter = 0;
    while hi - lo > eps && iter < max_iter {
        if a.value <= c.value {
            hi = c.lambda2;
            c = a;
            a = point(lo + GOLDEN_ALPHA * (hi - lo));
        } else {
            lo = a.lambda2;
            a = c;
            c = point(hi - GOLDEN_ALPHA * (hi - lo));
        }
        iter += 1;
    }

    let mut candidates = [point(lo), a, c, point(hi)];
    candidates.sort_by(|x, y| x.lambda2.total_cmp(&y.lambda2));
    Ok(candidates
        .into_iter()
        .reduce(|best, x| if x.value < best.value { x } else { best })
        .expect("four candidates"))
}

/// Position of an index relative to the reduced importance
/// `I_i - lambda1 - f_i lambda2` at a dual point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktClass {
    /// Strictly positive: `z_i = 1`.
    Positive,
    /// Zero within tolerance: `z_i` free in `[0, 1]`.
    Tied,
    /// Strictly negative: `z_i = 0`.
    Negative,
}

/// Fractional LP solution recovered from a dual point.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalPrimal {
    pub z: Vec<f64>,
    pub class: Vec<KktClass>,
    /// `D - Q_I(z)` at the dual point used for recovery.
    pub duality_gap: f64,
}

impl FractionalPrimal {
    fn members(&self, class: KktClass) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.class[i] == class).collect()
    }

    pub fn z1(&self) -> Vec<usize> {
        self.members(KktClass::Positive)
    }

    pub fn z2(&self) -> Vec<usize> {
        self.members(KktClass::Tied)
    }

    pub fn z3(&self) -> Vec<usize> {
        self.members(KktClass::Negative)
    }

    /// Indices with `z_i` strictly between 0 and 1.
    pub fn fractional(&self) -> Vec<usize> {
        (0..self.z.len())
            .filter(|&i| self.z[i] > 0.0 && self.z[i] < 1.0)
            .collect()
    }
}

/// Recover a fractional primal optimum from a (near-)optimal dual point.
///
/// Indices are classified by the sign of their reduced importance with
/// tolerance `eps_kkt`. Entries of the tied class receive mass so that the
/// budgets are met with equality where their multiplier is positive; mass is
/// assigned per group to the largest importances first, so at most one entry
/// per group is fractional.
pub fn recover_fractional_primal(
    gs: &GroupedSorted,
    b: &Budgets,
    dual: &DualPoint,
    eps_kkt: f64,
) -> Result<FractionalPrimal> {
    recover(gs, b, dual, eps_kkt, true)
}

fn recover(
    gs: &GroupedSorted,
    b: &Budgets,
    dual: &DualPoint,
    eps_kkt: f64,
    strict: bool,
) -> Result<FractionalPrimal> {
    let p = gs.len();
    let groups = gs.groups();
    let (l1, l2) = (dual.lambda1, dual.lambda2);
    let mut z = vec![0.0; p];
    let mut class = vec![KktClass::Negative; p];

    // Tied entries per group form a contiguous slice of the sorted values.
    let mut tied: Vec<(usize, usize)> = Vec::with_capacity(groups.len());
    let mut count1 = 0usize;
    let mut flops1 = 0.0;
    for g in groups {
        let threshold = l1 + g.cost * l2;
        let n1 = g.values.partition_point(|&v| v - threshold > eps_kkt);
        let n12 = g.values.partition_point(|&v| v - threshold >= -eps_kkt);
        for &i in &g.indices[..n1] {
            z[i] = 1.0;
            class[i] = KktClass::Positive;
        }
        for &i in &g.indices[n1..n12] {
            class[i] = KktClass::Tied;
        }
        count1 += n1;
        flops1 += n1 as f64 * g.cost;
        tied.push((n1, n12));
    }

    let s_rem = match b.nnz {
        Some(s) => s as f64 - count1 as f64,
        None => f64::INFINITY,
    };
    let f_rem = match b.flops {
        Some(f) => f - flops1,
        None => f64::INFINITY,
    };
    let f_tol = 1e-9 * b.flops.unwrap_or(0.0).max(1.0);
    if strict && (s_rem < 0.0 || f_rem < -f_tol) {
        return Err(FalconError::Certificate(format!(
            "strictly positive class exceeds the budgets ({count1} entries, {flops1} FLOPs)"
        )));
    }
    let s_rem = s_rem.max(0.0);
    let f_rem = f_rem.max(0.0);

    let masses = allocate_tied_mass(groups, &tied, s_rem, f_rem);
    for ((g, &(n1, n12)), mass) in groups.iter().zip(&tied).zip(masses) {
        let mut left = mass;
        for &i in &g.indices[n1..n12] {
            if left <= 0.0 {
                break;
            }
            let take = left.min(1.0);
            z[i] = take;
            left -= take;
        }
    }

    // Both limits can fail in a non-strict pass; drop from the tied class,
    // cheapest importance first within the most expensive group, until the
    // point is feasible for the relaxation.
    let mut primal = FractionalPrimal {
        z,
        class,
        duality_gap: 0.0,
    };
    if !strict {
        make_relaxation_feasible(gs, b, &mut primal);
    }

    let q: f64 = groups
        .iter()
        .flat_map(|g| g.indices.iter().zip(&g.values))
        .map(|(&i, &v)| v * primal.z[i])
        .sum();
    primal.duality_gap = dual.value - q;
    if strict {
        let tied_count: usize = tied.iter().map(|&(a, c)| c - a).sum();
        let tol = 1e-7 * dual.value.abs().max(f64::MIN_POSITIVE) + tied_count as f64 * eps_kkt;
        if primal.duality_gap > tol {
            return Err(FalconError::Certificate(format!(
                "recovered primal leaves duality gap {} above tolerance {tol}",
                primal.duality_gap
            )));
        }
    }
    Ok(primal)
}

fn make_relaxation_feasible(gs: &GroupedSorted, b: &Budgets, primal: &mut FractionalPrimal) {
    let groups = gs.groups();
    let sum_z = |z: &[f64]| z.iter().sum::<f64>();
    let flops = |z: &[f64]| {
        groups
            .iter()
            .map(|g| g.cost * g.indices.iter().map(|&i| z[i]).sum::<f64>())
            .sum::<f64>()
    };
    let mut order: Vec<(f64, usize)> = groups
        .iter()
        .flat_map(|g| g.indices.iter().zip(&g.values).map(|(&i, &v)| (v, i)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    for (_, i) in order {
        if b.admits_relaxed(sum_z(&primal.z), flops(&primal.z)) {
            break;
        }
        primal.z[i] = 0.0;
    }
}

impl Budgets {
    fn admits_relaxed(&self, count: f64, flops: f64) -> bool {
        self.nnz.is_none_or(|s| count <= s as f64 + 1e-9)
            && self.flops.is_none_or(|f| flops <= f * (1.0 + 1e-12))
    }
}

/// Distribute tied mass over groups: the largest count `s* <= s_rem` that fits
/// under `f_rem` when the cheapest groups are filled first, realised with FLOP
/// usage `min{f_rem, most-expensive-first usage}`.
///
/// Groups are laid out by cost descending on a line of unit slots; a window of
/// length `s*` slides from the expensive end (maximal FLOPs) to the cheap end
/// (minimal FLOPs) and is stopped where its FLOPs hit the target. At most two
/// groups end up with a fractional mass.
fn allocate_tied_mass(
    groups: &[crate::select::SortedGroup],
    tied: &[(usize, usize)],
    s_rem: f64,
    f_rem: f64,
) -> Vec<f64> {
    let mut order: Vec<usize> = (0..groups.len())
        .filter(|&j| tied[j].1 > tied[j].0)
        .collect();
    let mut masses = vec![0.0; groups.len()];
    if order.is_empty() {
        return masses;
    }
    order.sort_by(|&a, &b| groups[b].cost.total_cmp(&groups[a].cost).then(a.cmp(&b)));
    let sizes: Vec<f64> = order
        .iter()
        .map(|&j| (tied[j].1 - tied[j].0) as f64)
        .collect();
    let costs: Vec<f64> = order.iter().map(|&j| groups[j].cost).collect();
    let total: f64 = sizes.iter().sum();
    let cap = s_rem.min(total);

    // Cheapest-first fill bounded by the FLOP remainder.
    let mut count = 0.0;
    let mut budget = f_rem;
    for (k, &size) in sizes.iter().enumerate().rev() {
        let room = cap - count;
        if room <= 0.0 {
            break;
        }
        let take = size.min(room).min(budget / costs[k]);
        count += take;
        budget -= take * costs[k];
        if take < size.min(room) {
            break;
        }
    }
    let width = count.min(cap);
    if width <= 0.0 {
        return masses;
    }

    let mut starts = Vec::with_capacity(sizes.len() + 1);
    let mut cum_cost = Vec::with_capacity(sizes.len() + 1);
    starts.push(0.0);
    cum_cost.push(0.0);
    for (size, cost) in sizes.iter().zip(&costs) {
        starts.push(starts.last().unwrap() + size);
        cum_cost.push(cum_cost.last().unwrap() + size * cost);
    }
    let cumulative = |x: f64| -> f64 {
        let k = starts.partition_point(|&s| s <= x).saturating_sub(1);
        if k >= sizes.len() {
            return *cum_cost.last().unwrap();
        }
        cum_cost[k] + (x - starts[k]) * costs[k]
    };
    let window = |t: f64| cumulative(t + width) - cumulative(t);

    let last = (total - width).max(0.0);
    let target = f_rem.min(window(0.0));
    let mut breaks: Vec<f64> = starts
        .iter()
        .flat_map(|&s| [s, s - width])
        .filter(|&t| t > 0.0 && t < last)
        .collect();
    breaks.push(0.0);
    breaks.push(last);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut t = last;
    let mut prev = (0.0, window(0.0));
    for &bp in &breaks {
        let w = window(bp);
        if w <= target {
            t = if w == target || prev.1 == w {
                bp
            } else {
                let frac = (prev.1 - target) / (prev.1 - w);
                prev.0 + frac * (bp - prev.0)
            };
            break;
        }
        prev = (bp, w);
    }

    for (k, &j) in order.iter().enumerate() {
        let overlap = (t + width).min(starts[k + 1]) - t.max(starts[k]);
        if overlap > 0.0 {
            let snapped = overlap.round();
            masses[j] = if (overlap - snapped).abs() <= 1e-9 {
                snapped
            } else {
                overlap
            };
        }
    }
    masses
}

/// Keep every entry the fractional point sets to one, then add the remaining
/// tied entries by descending importance while both budgets allow.
pub fn round_to_binary(primal: &FractionalPrimal, inst: &GroupedInstance, b: &Budgets) -> Mask {
    let p = inst.len();
    let groups = &inst.groups;
    let mut mask = Mask::from((0..p).map(|i| primal.z[i] >= 1.0).collect::<Vec<_>>());
    let mut counts = groups.counts_of(&mask);

    // Guard against a base that floating-point rounding pushed over a limit.
    if !b.admits(mask.nnz(), groups.flops_of_counts(&counts)) {
        let mut kept: Vec<usize> = mask.indices().collect();
        kept.sort_by(|&x, &y| {
            inst.importance[x]
                .total_cmp(&inst.importance[y])
                .then(y.cmp(&x))
        });
        let mut nnz = mask.nnz();
        for i in kept {
            if b.admits(nnz, groups.flops_of_counts(&counts)) {
                break;
            }
            mask.set(i, false);
            counts[groups.group_of(i)] -= 1;
            nnz -= 1;
        }
    }

    let mut candidates: Vec<usize> = (0..p)
        .filter(|&i| primal.class[i] == KktClass::Tied && !mask.get(i))
        .collect();
    sort_by_importance_desc(&mut candidates, &inst.importance);
    greedy_fill(&mut mask, &mut counts, &candidates, inst, b);
    mask
}

fn sort_by_importance_desc(idx: &mut [usize], importance: &[f64]) {
    idx.sort_by(|&x, &y| importance[y].total_cmp(&importance[x]).then(x.cmp(&y)));
}

fn greedy_fill(
    mask: &mut Mask,
    counts: &mut [usize],
    candidates: &[usize],
    inst: &GroupedInstance,
    b: &Budgets,
) {
    let groups = &inst.groups;
    let mut nnz = mask.nnz();
    for &i in candidates {
        if b.nnz.is_some_and(|s| nnz >= s) {
            break;
        }
        let j = groups.group_of(i);
        counts[j] += 1;
        if b.admits(nnz + 1, groups.flops_of_counts(counts)) {
            mask.set(i, true);
            nnz += 1;
        } else {
            counts[j] -= 1;
        }
    }
}

fn gap_bound(inst: &GroupedInstance, b: &Budgets) -> f64 {
    let l = inst.groups.num_groups() as f64;
    let by_nnz = match b.nnz {
        Some(s) if s > 0 => l / s as f64,
        _ => 0.0,
    };
    let by_flops = match b.flops {
        Some(f) if f > 0.0 => inst.groups.cost_sum() / f,
        _ => 0.0,
    };
    by_nnz.max(by_flops)
}

fn mode_for(b: &Budgets) -> SelectionMode {
    match (b.nnz, b.flops) {
        (Some(_), Some(_)) => SelectionMode::Joint,
        (None, Some(_)) => SelectionMode::FlopOnly,
        _ => SelectionMode::SparsityOnly,
    }
}

/// Solve the selection ILP approximately, with an LP upper bound.
///
/// A slack budget (`S >= p`, `F >= sum_i f_i`, or unbounded) reduces the
/// problem to a single constraint: top-S by importance, or greedy by
/// importance per FLOP. Otherwise the dual is solved and rounded. Entries of
/// zero importance are never kept.
pub fn solve_ilp(inst: &GroupedInstance, b: &Budgets, opts: &IlpOptions) -> Result<SelectionResult> {
    b.check()?;
    let p = inst.len();
    let gap = gap_bound(inst, b);
    let mode = mode_for(b);
    let zero = |gap_bound: f64| SelectionResult {
        mask: Mask::zeros(p),
        objective: 0.0,
        upper_bound: 0.0,
        gap_bound,
        dual: DualPoint {
            lambda1: 0.0,
            lambda2: 0.0,
            value: 0.0,
        },
        mode,
    };

    let max_importance = inst.importance.iter().copied().fold(0.0, f64::max);
    if max_importance == 0.0 {
        return Ok(zero(0.0));
    }
    if b.nnz == Some(0) || b.flops == Some(0.0) {
        return Ok(zero(gap));
    }

    let gs = GroupedSorted::build(inst);
    let s_eff = b.nnz.filter(|&s| s < p);
    let f_eff = b.flops.filter(|&f| f < inst.groups.dense_flops());

    let (mut mask, upper_bound, dual) = match (s_eff, f_eff) {
        (None, None) => {
            let total: f64 = inst.importance.iter().sum();
            let dual = DualPoint {
                lambda1: 0.0,
                lambda2: 0.0,
                value: total,
            };
            (Mask::ones(p), total, dual)
        }
        (Some(s), None) => top_s(inst, &gs, s),
        (None, Some(f)) => by_ratio(inst, &gs, f),
        (Some(s), Some(f)) => joint(inst, &gs, &Budgets::joint(s, f), opts)?,
    };

    for (i, &v) in inst.importance.iter().enumerate() {
        if v == 0.0 {
            mask.set(i, false);
        }
    }
    Ok(SelectionResult {
        objective: inst.objective(&mask),
        mask,
        upper_bound,
        gap_bound: gap,
        dual,
        mode,
    })
}

fn top_s(inst: &GroupedInstance, gs: &GroupedSorted, s: usize) -> (Mask, f64, DualPoint) {
    let mut idx: Vec<usize> = (0..inst.len()).collect();
    sort_by_importance_desc(&mut idx, &inst.importance);
    let mask = Mask::from_indices(inst.len(), idx[..s].iter().copied());
    let lambda1 = gs.shifted_sth_largest(0.0, s).expect("s < p").max(0.0);
    let (pos, _) = gs.positive_part_sum(lambda1, 0.0);
    let value = s as f64 * lambda1 + pos;
    (
        mask,
        value,
        DualPoint {
            lambda1,
            lambda2: 0.0,
            value,
        },
    )
}

fn by_ratio(inst: &GroupedInstance, gs: &GroupedSorted, f: f64) -> (Mask, f64, DualPoint) {
    let groups = &inst.groups;
    let costs = groups.per_parameter_costs();
    let mut idx: Vec<usize> = (0..inst.len()).collect();
    idx.sort_by(|&x, &y| {
        (inst.importance[y] / costs[y])
            .total_cmp(&(inst.importance[x] / costs[x]))
            .then(x.cmp(&y))
    });

    // LP multiplier: ratio of the first entry that does not fit in full.
    let mut used = 0.0;
    let mut lambda2 = 0.0;
    for &i in &idx {
        if used + costs[i] > f {
            lambda2 = inst.importance[i] / costs[i];
            break;
        }
        used += costs[i];
    }
    let (pos, _) = gs.positive_part_sum(0.0, lambda2);
    let value = f * lambda2 + pos;

    let mut mask = Mask::zeros(inst.len());
    let mut counts = vec![0; groups.num_groups()];
    greedy_fill(&mut mask, &mut counts, &idx, inst, &Budgets::flops_only(f));
    (
        mask,
        value,
        DualPoint {
            lambda1: 0.0,
            lambda2,
            value,
        },
    )
}

fn joint(
    inst: &GroupedInstance,
    gs: &GroupedSorted,
    b: &Budgets,
    opts: &IlpOptions,
) -> Result<(Mask, f64, DualPoint)> {
    let width0 = gs.max_ratio();
    let eps = opts.rel_tol * width0;
    let dual = solve_dual(gs, b, eps)?;

    // Misclassification from an inexact lambda2 is at most f_j * |d lambda2|.
    let max_cost = inst.groups.flop_costs().iter().copied().fold(0.0, f64::max);
    let mut eps_kkt = (opts.kkt_rel_tol * gs.max_importance()).max(2.0 * max_cost * eps);
    let mut primal = None;
    for _ in 0..6 {
        match recover(gs, b, &dual, eps_kkt, true) {
            Ok(pr) => {
                primal = Some(pr);
                break;
            }
            Err(FalconError::Certificate(_)) => eps_kkt *= 100.0,
            Err(e) => return Err(e),
        }
    }
    let primal = match primal {
        Some(pr) => pr,
        None => recover(gs, b, &dual, eps_kkt, false)?,
    };
    let mut mask = round_to_binary(&primal, inst, b);
    fill_from_negative_class(&mut mask, &primal, inst, b);
    Ok((mask, dual.value, dual))
}

/// Budget left after the tied entries is offered to the remaining entries,
/// again by descending importance.
fn fill_from_negative_class(
    mask: &mut Mask,
    primal: &FractionalPrimal,
    inst: &GroupedInstance,
    b: &Budgets,
) {
    let mut candidates: Vec<usize> = (0..inst.len())
        .filter(|&i| primal.class[i] == KktClass::Negative && inst.importance[i] > 0.0)
        .collect();
    sort_by_importance_desc(&mut candidates, &inst.importance);
    let mut counts = inst.groups.counts_of(mask);
    greedy_fill(mask, &mut counts, &candidates, inst, b);
}

/// Exact optimum by enumerating all `2^p` masks (`p <= 25`); ties go to the
/// lexicographically smallest mask.
pub fn brute_force_ilp(inst: &GroupedInstance, b: &Budgets) -> Result<SelectionResult> {
    let p = inst.len();
    if p > BRUTE_FORCE_MAX_P {
        return Err(FalconError::Size {
            p,
            max: BRUTE_FORCE_MAX_P,
        });
    }
    let groups = &inst.groups;
    let group_of: Vec<usize> = (0..p).map(|i| groups.group_of(i)).collect();
    // Bit (p - 1 - i) holds z_i, so numeric order is lexicographic order.
    let exact = |code: u32| -> f64 {
        (0..p)
            .filter(|&i| code >> (p - 1 - i) & 1 == 1)
            .map(|i| inst.importance[i])
            .sum()
    };
    let mut counts = vec![0usize; groups.num_groups()];
    let mut nnz = 0usize;
    let mut running = 0.0;
    let mut best_code = 0u32;
    let mut best = 0.0;
    for k in 1u64..(1u64 << p) {
        let bit = k.trailing_zeros() as usize;
        let i = p - 1 - bit;
        let code = (k ^ (k >> 1)) as u32;
        if code >> bit & 1 == 1 {
            counts[group_of[i]] += 1;
            nnz += 1;
            running += inst.importance[i];
        } else {
            counts[group_of[i]] -= 1;
            nnz -= 1;
            running -= inst.importance[i];
        }
        if running < best - 1e-9 * (1.0 + best) {
            continue;
        }
        if !b.admits(nnz, groups.flops_of_counts(&counts)) {
            continue;
        }
        let value = exact(code);
        if value > best || (value == best && code < best_code) {
            best = value;
            best_code = code;
        }
    }
    let mask = Mask::from((0..p).map(|i| best_code >> (p - 1 - i) & 1 == 1).collect::<Vec<_>>());
    Ok(SelectionResult {
        objective: inst.objective(&mask),
        mask,
        upper_bound: best,
        gap_bound: 0.0,
        dual: DualPoint {
            lambda1: 0.0,
            lambda2: 0.0,
            value: best,
        },
        mode: mode_for(b),
    })
}
