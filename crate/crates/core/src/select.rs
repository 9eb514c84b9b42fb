//! Per-group sorted view of an importance vector and selection over several
//! sorted arrays.
//!
//! Because every parameter of a group shares one FLOP cost, the order of
//! `I_i - lambda2 * f_i` inside a group does not depend on `lambda2`. Sorting
//! each group once therefore turns every shifted vector into `L` sorted runs,
//! and the S-th largest entry can be found by median-pivot elimination in
//! `O(L (log p)^2)` without materialising the shifted vector.

use crate::error::{FalconError, Result};
use crate::problem::GroupedInstance;

#[derive(Debug, Clone)]
pub struct SortedGroup {
    /// Importances of the group, non-increasing.
    pub values: Vec<f64>,
    /// Original parameter index of each entry of `values`.
    pub indices: Vec<usize>,
    /// `prefix[k]` is the sum of the `k` largest importances; `prefix[0] = 0`.
    pub prefix: Vec<f64>,
    pub cost: f64,
}

impl SortedGroup {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of entries whose reduced value `I - threshold` is strictly positive.
    fn count_above(&self, threshold: f64) -> usize {
        self.values.partition_point(|&v| v > threshold)
    }
}

#[derive(Debug, Clone)]
pub struct GroupedSorted {
    groups: Vec<SortedGroup>,
    p: usize,
}

impl GroupedSorted {
    /// Sort each group descending, ties by ascending original index.
    pub fn build(inst: &GroupedInstance) -> Self {
        let groups = inst
            .groups
            .ranges()
            .zip(inst.groups.flop_costs())
            .map(|(range, &cost)| {
                let mut indices: Vec<usize> = range.collect();
                indices.sort_by(|&a, &b| {
                    inst.importance[b]
                        .total_cmp(&inst.importance[a])
                        .then(a.cmp(&b))
                });
                let values: Vec<f64> = indices.iter().map(|&i| inst.importance[i]).collect();
                let mut prefix = Vec::with_capacity(values.len() + 1);
                prefix.push(0.0);
                let mut acc = 0.0;
                for &v in &values {
                    acc += v;
                    prefix.push(acc);
                }
                SortedGroup {
                    values,
                    indices,
                    prefix,
                    cost,
                }
            })
            .collect();
        Self {
            groups,
            p: inst.len(),
        }
    }

    pub fn groups(&self) -> &[SortedGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    /// `max_i I_i / f_i`, the right end of the golden-section bracket.
    pub fn max_ratio(&self) -> f64 {
        self.groups
            .iter()
            .filter_map(|g| g.values.first().map(|&v| v / g.cost))
            .fold(0.0, f64::max)
    }

    pub fn max_importance(&self) -> f64 {
        self.groups
            .iter()
            .filter_map(|g| g.values.first().copied())
            .fold(0.0, f64::max)
    }

    /// `(I - lambda2 f)_(S)`: S-th largest shifted importance (1-based `s`).
    pub fn shifted_sth_largest(&self, lambda2: f64, s: usize) -> Result<f64> {
        let runs: Vec<Run<'_>> = self
            .groups
            .iter()
            .map(|g| Run::new(&g.values, lambda2 * g.cost))
            .collect();
        select_sth_largest(runs, s).map(|(v, _)| v)
    }

    /// `sum_i max{I_i - lambda1 - f_i lambda2, 0}` and the number of strictly
    /// positive terms. One binary search per group plus prefix sums; groups are
    /// reduced in a fixed order.
    pub fn positive_part_sum(&self, lambda1: f64, lambda2: f64) -> (f64, usize) {
        let mut sum = 0.0;
        let mut count = 0;
        for g in &self.groups {
            let threshold = lambda1 + g.cost * lambda2;
            let k = g.count_above(threshold);
            if k > 0 {
                sum += g.prefix[k] - k as f64 * threshold;
                count += k;
            }
        }
        (sum, count)
    }
}

/// Half-open window `lo..hi` of a descending array, read shifted by `-shift`.
#[derive(Debug, Clone, Copy)]
struct Run<'a> {
    values: &'a [f64],
    shift: f64,
    lo: usize,
    hi: usize,
}

impl<'a> Run<'a> {
    fn new(values: &'a [f64], shift: f64) -> Self {
        Self {
            values,
            shift,
            lo: 0,
            hi: values.len(),
        }
    }

    fn len(&self) -> usize {
        self.hi - self.lo
    }

    fn at(&self, k: usize) -> f64 {
        self.values[k] - self.shift
    }

    fn median(&self) -> f64 {
        self.at(self.lo + (self.len() - 1) / 2)
    }

    /// Entries `>= pivot` (a prefix of the window).
    fn count_at_least(&self, pivot: f64) -> usize {
        self.values[self.lo..self.hi].partition_point(|&v| v - self.shift >= pivot)
    }

    /// Entries `> pivot` (a prefix of the window).
    fn count_above(&self, pivot: f64) -> usize {
        self.values[self.lo..self.hi].partition_point(|&v| v - self.shift > pivot)
    }
}

/// Outcome of a selection, with the number of elimination rounds it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub value: f64,
    pub rounds: usize,
}

/// S-th largest element (1-based) of the union of descending arrays.
pub fn largesort(arrays: &[&[f64]], s: usize) -> Result<f64> {
    largesort_traced(arrays, s).map(|sel| sel.value)
}

/// [`largesort`] that also reports how many elimination rounds ran.
pub fn largesort_traced(arrays: &[&[f64]], s: usize) -> Result<Selection> {
    let runs = arrays.iter().map(|a| Run::new(a, 0.0)).collect();
    select_sth_largest(runs, s).map(|(value, rounds)| Selection { value, rounds })
}

fn select_sth_largest(mut runs: Vec<Run<'_>>, mut s: usize) -> Result<(f64, usize)> {
    let mut total: usize = runs.iter().map(Run::len).sum();
    if s == 0 || s > total {
        return Err(FalconError::Domain(format!(
            "selection rank {s} outside 1..={total}"
        )));
    }
    let mut medians: Vec<(f64, usize)> = Vec::with_capacity(runs.len());
    let mut rounds = 0;
    loop {
        rounds += 1;
        medians.clear();
        medians.extend(
            runs.iter()
                .enumerate()
                .filter(|(_, r)| r.len() > 0)
                .map(|(j, r)| (r.median(), j)),
        );
        medians.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        // Pivot: median of the first run (in median order) at which the
        // cumulative length reaches half of the remaining elements.
        let mut covered = 0;
        let mut pivot = medians[0].0;
        for &(m, j) in &medians {
            covered += runs[j].len();
            if 2 * covered >= total {
                pivot = m;
                break;
            }
        }

        let at_least: Vec<usize> = runs.iter().map(|r| r.count_at_least(pivot)).collect();
        let ge: usize = at_least.iter().sum();
        if ge < s {
            // Everything >= pivot ranks above the target; drop it.
            for (r, &k) in runs.iter_mut().zip(&at_least) {
                r.lo += k;
            }
            s -= ge;
            total -= ge;
            continue;
        }
        let above: Vec<usize> = runs.iter().map(|r| r.count_above(pivot)).collect();
        let gt: usize = above.iter().sum();
        if gt >= s {
            // Target is strictly above the pivot; keep only that part.
            for (r, &k) in runs.iter_mut().zip(&above) {
                r.hi = r.lo + k;
            }
            total = gt;
            continue;
        }
        return Ok((pivot, rounds));
    }
}
