//! Domain types shared by every solver: the FLOP group structure, the
//! selection instance, NNZ/FLOP budgets, binary masks and their evaluation.
//!
//! Parameters are assumed to be pre-permuted into group order, so each group
//! `C_j` is the contiguous index range `offsets[j]..offsets[j + 1]` and every
//! parameter in it costs `flop_cost[j]` FLOPs.

use std::fmt;
use std::ops::Range;

use crate::error::{check_len, FalconError, Result};

/// A single broken invariant of a [`GroupStructure`] or [`GroupedInstance`].
///
/// Group and parameter numbers in messages are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoGroups,
    FirstOffsetNonzero(usize),
    LastOffsetMismatch { found: usize, expected: usize },
    OffsetsNotIncreasing { position: usize },
    CostCount { expected: usize, found: usize },
    NonpositiveCost { group: usize },
    NonfiniteCost { group: usize },
    NegativeImportance { index: usize },
    NonfiniteImportance { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoGroups => write!(f, "no groups"),
            Violation::FirstOffsetNonzero(v) => write!(f, "first group offset is {v}, expected 0"),
            Violation::LastOffsetMismatch { found, expected } => {
                write!(f, "last group offset is {found}, expected p = {expected}")
            }
            Violation::OffsetsNotIncreasing { position } => {
                write!(f, "offsets not increasing at position {position}")
            }
            Violation::CostCount { expected, found } => {
                write!(f, "expected {expected} group costs, found {found}")
            }
            Violation::NonpositiveCost { group } => write!(f, "nonpositive cost in group {group}"),
            Violation::NonfiniteCost { group } => write!(f, "non-finite cost in group {group}"),
            Violation::NegativeImportance { index } => {
                write!(f, "negative importance at parameter {index}")
            }
            Violation::NonfiniteImportance { index } => {
                write!(f, "non-finite importance at parameter {index}")
            }
        }
    }
}

/// Partition of `[0, p)` into contiguous groups with a uniform per-parameter
/// FLOP cost inside each group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure {
    offsets: Vec<usize>,
    flop_cost: Vec<f64>,
}

impl GroupStructure {
    pub fn new(offsets: Vec<usize>, flop_cost: Vec<f64>) -> Result<Self> {
        let p = offsets.last().copied().unwrap_or(0);
        let violations = validate_groups(&offsets, &flop_cost, p);
        if violations.is_empty() {
            Ok(Self { offsets, flop_cost })
        } else {
            Err(FalconError::InvalidInstance(violations))
        }
    }

    /// One group per parameter, each with its own cost.
    pub fn singletons(flop_cost: Vec<f64>) -> Result<Self> {
        Self::new((0..=flop_cost.len()).collect(), flop_cost)
    }

    /// A single group of `p` parameters at unit cost.
    pub fn uniform(p: usize) -> Result<Self> {
        Self::new(vec![0, p], vec![1.0])
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_groups(&self) -> usize {
        self.flop_cost.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn flop_costs(&self) -> &[f64] {
        &self.flop_cost
    }

    pub fn cost(&self, group: usize) -> f64 {
        self.flop_cost[group]
    }

    pub fn range(&self, group: usize) -> Range<usize> {
        self.offsets[group]..self.offsets[group + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    /// Group containing parameter `index`.
    pub fn group_of(&self, index: usize) -> usize {
        self.offsets.partition_point(|&o| o <= index) - 1
    }

    /// Expanded per-parameter cost vector `f_i`.
    pub fn per_parameter_costs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (range, &cost) in self.ranges().zip(&self.flop_cost) {
            out.extend(std::iter::repeat_n(cost, range.len()));
        }
        out
    }

    /// `L_f`, the sum of the distinct group costs.
    pub fn cost_sum(&self) -> f64 {
        self.flop_cost.iter().sum()
    }

    /// FLOPs of the dense model, `sum_j |C_j| f^j`.
    pub fn dense_flops(&self) -> f64 {
        let sizes: Vec<usize> = self.ranges().map(|r| r.len()).collect();
        self.flops_of_counts(&sizes)
    }

    /// FLOPs from per-group kept counts. Every feasibility test in the crate
    /// goes through this function so that all of them round identically.
    pub fn flops_of_counts(&self, counts: &[usize]) -> f64 {
        counts
            .iter()
            .zip(&self.flop_cost)
            .fold(0.0, |acc, (&c, &f)| acc + c as f64 * f)
    }

    pub fn counts_of(&self, mask: &Mask) -> Vec<usize> {
        self.ranges()
            .map(|r| mask.as_slice()[r].iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn flops_of(&self, mask: &Mask) -> f64 {
        self.flops_of_counts(&self.counts_of(mask))
    }

    /// `||w||_{0,f}` for a weight vector.
    pub fn flops_of_support(&self, weights: &[f64]) -> f64 {
        self.flops_of(&Mask::support_of(weights))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_groups(&self.offsets, &self.flop_cost, self.len())
    }
}

fn validate_groups(offsets: &[usize], costs: &[f64], p: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if offsets.len() < 2 {
        out.push(Violation::NoGroups);
    }
    if let Some(&first) = offsets.first() {
        if first != 0 {
            out.push(Violation::FirstOffsetNonzero(first));
        }
    }
    if let Some(&last) = offsets.last() {
        if last != p {
            out.push(Violation::LastOffsetMismatch {
                found: last,
                expected: p,
            });
        }
    }
    if let Some(k) = offsets.windows(2).position(|w| w[0] >= w[1]) {
        out.push(Violation::OffsetsNotIncreasing { position: k + 1 });
    }
    let groups = offsets.len().saturating_sub(1);
    if costs.len() != groups {
        out.push(Violation::CostCount {
            expected: groups,
            found: costs.len(),
        });
    }
    for (j, &c) in costs.iter().enumerate() {
        if !c.is_finite() {
            out.push(Violation::NonfiniteCost { group: j + 1 });
        } else if c <= 0.0 {
            out.push(Violation::NonpositiveCost { group: j + 1 });
        }
    }
    out
}

/// Importance scores over a grouped parameter vector: the data of the
/// selection ILP `max sum I_i z_i  s.t.  sum z_i <= S,  sum f_i z_i <= F`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedInstance {
    pub groups: GroupStructure,
    pub importance: Vec<f64>,
}

impl GroupedInstance {
    pub fn new(groups: GroupStructure, importance: Vec<f64>) -> Result<Self> {
        let inst = Self { groups, importance };
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(FalconError::InvalidInstance(violations))
        }
    }

    /// Build from raw parts, reporting every violation instead of stopping at
    /// the first. The returned instance is only usable when the list is empty.
    pub fn from_parts(
        offsets: Vec<usize>,
        flop_cost: Vec<f64>,
        importance: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            groups: GroupStructure { offsets, flop_cost },
            importance,
        };
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(FalconError::InvalidInstance(violations))
        }
    }

    /// Every invariant violation; empty means the instance is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = validate_groups(
            &self.groups.offsets,
            &self.groups.flop_cost,
            self.importance.len(),
        );
        for (i, &v) in self.importance.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonfiniteImportance { index: i + 1 });
            } else if v < 0.0 {
                out.push(Violation::NegativeImportance { index: i + 1 });
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.importance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.importance.is_empty()
    }

    /// `Q_I(z) = sum_i I_i z_i`, accumulated in index order.
    pub fn objective(&self, mask: &Mask) -> f64 {
        self.importance
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, &keep)| keep)
            .fold(0.0, |acc, (&v, _)| acc + v)
    }
}

/// NNZ cap `S` and FLOP cap `F`. `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Budgets {
    pub nnz: Option<usize>,
    pub flops: Option<f64>,
}

impl Budgets {
    pub const UNBOUNDED: Budgets = Budgets {
        nnz: None,
        flops: None,
    };

    pub fn new(nnz: Option<usize>, flops: Option<f64>) -> Self {
        Self { nnz, flops }
    }

    pub fn joint(nnz: usize, flops: f64) -> Self {
        Self::new(Some(nnz), Some(flops))
    }

    pub fn nnz_only(nnz: usize) -> Self {
        Self::new(Some(nnz), None)
    }

    pub fn flops_only(flops: f64) -> Self {
        Self::new(None, Some(flops))
    }

    /// Budgets multiplied by `factor` (used for the enlarged initial active set).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nnz: self
                .nnz
                .map(|s| (s as f64 * factor).floor().min(usize::MAX as f64) as usize),
            flops: self.flops.map(|f| f * factor),
        }
    }

    pub fn admits(&self, nnz: usize, flops: f64) -> bool {
        self.nnz.is_none_or(|s| nnz <= s) && self.flops.is_none_or(|f| flops <= f)
    }

    pub fn check(&self) -> Result<()> {
        match self.flops {
            Some(f) if !(f >= 0.0) => Err(FalconError::Domain(format!(
                "FLOP budget must be a nonnegative number, got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Binary keep/prune decision per parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn zeros(p: usize) -> Self {
        Self(vec![false; p])
    }

    pub fn ones(p: usize) -> Self {
        Self(vec![true; p])
    }

    pub fn from_indices(p: usize, kept: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(p);
        for i in kept {
            m.0[i] = true;
        }
        m
    }

    /// `supp(w)`: the nonzero pattern of a weight vector.
    pub fn support_of(weights: &[f64]) -> Self {
        Self(weights.iter().map(|&w| w != 0.0).collect())
    }

    /// Parse a 0/1 byte vector; any other byte value is an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(FalconError::Domain(format!(
                    "mask byte {i} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, keep: bool) {
        self.0[i] = keep;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// `true` when every kept index of `self` is also kept in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    /// `w_i * z_i`.
    pub fn apply(&self, weights: &[f64]) -> Vec<f64> {
        weights
            .iter()
            .zip(&self.0)
            .map(|(&w, &k)| if k { w } else { 0.0 })
            .collect()
    }
}

impl From<Vec<bool>> for Mask {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskReport {
    pub nnz: usize,
    pub flops: f64,
    pub objective: f64,
    pub feasible: bool,
}

/// Count, FLOP cost and retained importance of a mask, and whether it fits
/// the budgets.
pub fn eval_mask(mask: &Mask, inst: &GroupedInstance, budgets: &Budgets) -> Result<MaskReport> {
    check_len("mask", inst.len(), mask.len())?;
    let nnz = mask.nnz();
    let flops = inst.groups.flops_of(mask);
    Ok(MaskReport {
        nnz,
        flops,
        objective: inst.objective(mask),
        feasible: budgets.admits(nnz, flops),
    })
}
