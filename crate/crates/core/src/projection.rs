//! Euclidean projection onto `{x : ||x||_0 <= S, ||x||_{0,f} <= F}`.
//!
//! Keeping coordinate `i` saves `xbar_i^2` of squared distance, so the best
//! support is the selection ILP with importance `I_i = xbar_i^2`.

use crate::error::{check_len, Result};
use crate::ilp::{solve_ilp, IlpOptions, SelectionResult};
use crate::problem::{Budgets, GroupStructure, GroupedInstance, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `x_i = xbar_i z_i`.
    pub x: Vec<f64>,
    pub mask: Mask,
    pub selection: SelectionResult,
}

pub fn project(
    xbar: &[f64],
    groups: &GroupStructure,
    b: &Budgets,
    opts: &IlpOptions,
) -> Result<Projection> {
    check_len("projected vector", groups.len(), xbar.len())?;
    let importance = xbar.iter().map(|&v| v * v).collect();
    finish(xbar, groups, importance, b, opts)
}

/// Projection with coordinates outside `active` pinned to zero.
pub fn project_restricted(
    xbar: &[f64],
    groups: &GroupStructure,
    b: &Budgets,
    opts: &IlpOptions,
    active: &Mask,
) -> Result<Projection> {
    check_len("projected vector", groups.len(), xbar.len())?;
    check_len("active set", groups.len(), active.len())?;
    let importance = xbar
        .iter()
        .zip(active.as_slice())
        .map(|(&v, &keep)| if keep { v * v } else { 0.0 })
        .collect();
    finish(xbar, groups, importance, b, opts)
}

fn finish(
    xbar: &[f64],
    groups: &GroupStructure,
    importance: Vec<f64>,
    b: &Budgets,
    opts: &IlpOptions,
) -> Result<Projection> {
    let inst = GroupedInstance::new(groups.clone(), importance)?;
    let selection = solve_ilp(&inst, b, opts)?;
    Ok(Projection {
        x: selection.mask.apply(xbar),
        mask: selection.mask.clone(),
        selection,
    })
}
