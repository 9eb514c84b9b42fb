//! Discrete first-order minimisation of the quadratic model under the budgets.
//!
//! A DFO step is a gradient step followed by the doubly-constrained projection.
//! [`act_dfo`] runs such steps on a growing active set, [`backsolve`] then
//! minimises the model exactly on the support found, one block at a time, and
//! [`bso_dfo`] chains the two.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_len, FalconError, Result};
use crate::ilp::IlpOptions;
use crate::problem::{Budgets, GroupStructure, Mask};
use crate::projection::{project, project_restricted, Projection};
use crate::quadratic::LowRankQuadratic;

#[derive(Debug, Clone, PartialEq)]
pub struct DfoConfig {
    /// Base step size `tau_s`.
    pub tau: f64,
    /// Restricted DFO steps per active-set round.
    pub inner_steps: usize,
    pub max_rounds: usize,
    /// Line-search multipliers of `tau`, ascending.
    pub step_multipliers: Vec<f64>,
    /// Budget factor for the initial active set.
    pub active_init_scale: f64,
    pub ilp: IlpOptions,
}

impl Default for DfoConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            inner_steps: 1,
            max_rounds: 20,
            step_multipliers: (0..=10).map(|k| f64::from(1u32 << k)).collect(),
            active_init_scale: 2.0,
            ilp: IlpOptions::default(),
        }
    }
}

impl DfoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(FalconError::Domain(format!(
                "step size must be positive, got {}",
                self.tau
            )));
        }
        if self.inner_steps == 0 {
            return Err(FalconError::Domain(
                "at least one inner step per round is required".into(),
            ));
        }
        if self.step_multipliers.is_empty()
            || self.step_multipliers.iter().any(|&m| !(m > 0.0))
            || self.step_multipliers.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(FalconError::Domain(
                "line-search multipliers must be positive and strictly ascending".into(),
            ));
        }
        if !(self.active_init_scale >= 1.0) {
            return Err(FalconError::Domain(format!(
                "active-set scale must be at least 1, got {}",
                self.active_init_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Model value at the end of the round.
    pub objective: f64,
    /// Active-set size the round ran on.
    pub active_size: usize,
    /// Accepted line-search step, if any.
    pub step: Option<f64>,
    pub nnz: usize,
    pub flops: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub initial_objective: f64,
    pub rounds: Vec<RoundRecord>,
    /// Model value after the backsolve, when one ran.
    pub backsolve_objective: Option<f64>,
    pub final_objective: f64,
    /// Dual value and gap certificate of the last full projection.
    pub dual_value: f64,
    pub gap_bound: f64,
}

fn feasible(groups: &GroupStructure, b: &Budgets, w: &[f64]) -> bool {
    let support = Mask::support_of(w);
    b.admits(support.nnz(), groups.flops_of(&support))
}

fn axpy(w: &[f64], tau: f64, grad: &[f64]) -> Vec<f64> {
    w.iter().zip(grad).map(|(a, g)| a - tau * g).collect()
}

/// `P_{S,F}(w - tau * grad Q(w))`.
pub fn dfo_step(
    m: &LowRankQuadratic,
    w: &[f64],
    tau: f64,
    groups: &GroupStructure,
    b: &Budgets,
    opts: &IlpOptions,
) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(FalconError::Domain(format!("step size must be nonnegative, got {tau}")));
    }
    let grad = m.gradient(w)?;
    Ok(project(&axpy(w, tau, &grad), groups, b, opts)?.x)
}

/// Active-set DFO started from `w0` on the active set `active`.
///
/// Each round takes `inner_steps` DFO steps confined to the active set, then
/// searches the step grid for a full DFO step that lowers the model and leaves
/// the active set; its support is added. The loop ends when no step qualifies
/// or after `max_rounds` rounds.
pub fn act_dfo(
    m: &LowRankQuadratic,
    w0: &[f64],
    cfg: &DfoConfig,
    groups: &GroupStructure,
    b: &Budgets,
    active: &Mask,
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    check_len("initial weights", m.p(), w0.len())?;
    check_len("group structure", m.p(), groups.len())?;
    let mut active = active.clone();
    let mut w = project_restricted(w0, groups, b, &cfg.ilp, &active)?.x;
    let mut q = m.objective(&w)?;
    if Mask::support_of(w0).is_subset_of(&active) && feasible(groups, b, w0) {
        let q0 = m.objective(w0)?;
        if q0 <= q {
            w = w0.to_vec();
            q = q0;
        }
    }
    let mut trace = SolveTrace {
        initial_objective: q,
        ..SolveTrace::default()
    };

    for _ in 0..cfg.max_rounds {
        for _ in 0..cfg.inner_steps {
            let grad = m.gradient(&w)?;
            let cand =
                project_restricted(&axpy(&w, cfg.tau, &grad), groups, b, &cfg.ilp, &active)?.x;
            let qc = m.objective(&cand)?;
            if qc <= q {
                w = cand;
                q = qc;
            }
        }

        let grad = m.gradient(&w)?;
        let mut accepted: Option<(f64, Projection, f64)> = None;
        for &mult in &cfg.step_multipliers {
            let step = cfg.tau * mult;
            let cand = project(&axpy(&w, step, &grad), groups, b, &cfg.ilp)?;
            trace.dual_value = cand.selection.upper_bound;
            trace.gap_bound = cand.selection.gap_bound;
            let qc = m.objective(&cand.x)?;
            if qc < q && !Mask::support_of(&cand.x).is_subset_of(&active) {
                accepted = Some((step, cand, qc));
                break;
            }
        }

        let active_size = active.nnz();
        let step = accepted.as_ref().map(|a| a.0);
        if let Some((_, cand, qc)) = accepted {
            active.union_with(&Mask::support_of(&cand.x));
            w = cand.x;
            q = qc;
        }
        let support = Mask::support_of(&w);
        trace.rounds.push(RoundRecord {
            objective: q,
            active_size,
            step,
            nnz: support.nnz(),
            flops: groups.flops_of(&support),
        });
        if step.is_none() {
            break;
        }
    }
    trace.final_objective = q;
    Ok((w, trace))
}

/// `(ridge I + rho A'A)^{-1} v` via the `n x n` system
/// `(ridge I + rho A A') y = A v`, `x = (v - rho A'y) / ridge`.
pub fn woodbury_solve(a: &DMatrix<f64>, rho: f64, ridge: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(ridge > 0.0) {
        return Err(FalconError::Singular(
            "the backsolve needs a positive ridge term n * lambda".into(),
        ));
    }
    let mut gram = a * a.transpose() * rho;
    for k in 0..gram.nrows() {
        gram[(k, k)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| FalconError::Singular("sample Gram system is not positive definite".into()))?;
    let apply = |rhs: &DVector<f64>| -> DVector<f64> {
        let y = chol.solve(&(a * rhs));
        (rhs - a.transpose() * y * rho) / ridge
    };
    // One refinement step against the unfactored operator.
    let x = apply(v);
    let residual = v - (&x * ridge + a.transpose() * (a * &x) * rho);
    Ok(x + apply(&residual))
}

/// `(ridge I + rho A'A)^{-1} v` by factoring the `k x k` matrix directly.
pub fn direct_solve(a: &DMatrix<f64>, rho: f64, ridge: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(ridge > 0.0) {
        return Err(FalconError::Singular(
            "the backsolve needs a positive ridge term n * lambda".into(),
        ));
    }
    let mut h = a.transpose() * a * rho;
    for k in 0..h.nrows() {
        h[(k, k)] += ridge;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| FalconError::Singular("block system is not positive definite".into()))?;
    Ok(chol.solve(v))
}

/// Minimiser of the model over the coordinates `support` of block `j`, with
/// the other coordinates of the block held at zero. Returns the new weights
/// of `support`, in order.
pub fn backsolve_block(m: &LowRankQuadratic, j: usize, support: &[usize]) -> Result<Vec<f64>> {
    let range = m.block_range(j);
    if let Some(&i) = support.iter().find(|&&i| !range.contains(&i)) {
        return Err(FalconError::Domain(format!(
            "index {i} is outside block {}",
            j + 1
        )));
    }
    if support.is_empty() {
        return Ok(Vec::new());
    }
    if !(m.ridge() > 0.0) {
        return Err(FalconError::Singular(
            "the backsolve needs a positive ridge term n * lambda".into(),
        ));
    }
    let n = m.n();
    let w_bar = m.w_bar();
    let a = DMatrix::from_fn(n, support.len(), |r, c| {
        f64::from(m.row_slice(r, support[c]..support[c] + 1)[0])
    });

    // Pinned coordinates move by -wbar and feed a constant residual.
    let mut pinned = vec![0.0; m.p()];
    let mut in_support = vec![false; range.len()];
    for &i in support {
        in_support[i - range.start] = true;
    }
    for i in range.clone() {
        if !in_support[i - range.start] {
            pinned[i] = -w_bar[i];
        }
    }
    let r_fixed = DVector::from_vec(m.block_residual(range, &pinned));
    let g = DVector::from_iterator(support.len(), support.iter().map(|&i| m.g()[i]));
    let v = g + a.transpose() * r_fixed * m.rho();

    let step = if support.len() > n {
        woodbury_solve(&a, m.rho(), m.ridge(), &v)?
    } else {
        direct_solve(&a, m.rho(), m.ridge(), &v)?
    };
    Ok(support
        .iter()
        .zip(step.iter())
        .map(|(&i, &d)| w_bar[i] - d)
        .collect())
}

/// Exact minimiser of the model over weights supported on `support`.
pub fn backsolve(m: &LowRankQuadratic, support: &Mask) -> Result<Vec<f64>> {
    check_len("support", m.p(), support.len())?;
    let solved: Vec<(Vec<usize>, Vec<f64>)> = (0..m.num_blocks())
        .into_par_iter()
        .map(|j| {
            let idx: Vec<usize> = m.block_range(j).filter(|&i| support.get(i)).collect();
            backsolve_block(m, j, &idx).map(|w| (idx, w))
        })
        .collect::<Result<_>>()?;
    let mut w = vec![0.0; m.p()];
    for (idx, vals) in solved {
        for (i, v) in idx.into_iter().zip(vals) {
            w[i] = v;
        }
    }
    Ok(w)
}

/// Active-set DFO from `P_{S,F}(w0)` followed by the exact backsolve on the
/// support it finds.
///
/// The initial active set is the support of the projection of `wbar` at
/// budgets scaled by `active_init_scale`, together with the support of the
/// starting point.
pub fn bso_dfo(
    m: &LowRankQuadratic,
    w0: &[f64],
    cfg: &DfoConfig,
    groups: &GroupStructure,
    b: &Budgets,
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    check_len("initial weights", m.p(), w0.len())?;
    if !(m.ridge() > 0.0) {
        return Err(FalconError::Singular(
            "the backsolve needs a positive ridge term n * lambda".into(),
        ));
    }
    let start = project(w0, groups, b, &cfg.ilp)?;
    let mut active = project(m.w_bar(), groups, &b.scaled(cfg.active_init_scale), &cfg.ilp)?.mask;
    active.union_with(&Mask::support_of(&start.x));

    let (mut w, mut trace) = act_dfo(m, &start.x, cfg, groups, b, &active)?;
    if trace.rounds.is_empty() {
        trace.dual_value = start.selection.upper_bound;
        trace.gap_bound = start.selection.gap_bound;
    }
    if !feasible(groups, b, &w) {
        w = project(&w, groups, b, &cfg.ilp)?.x;
    }
    let w_star = backsolve(m, &Mask::support_of(&w))?;
    let q_star = m.objective(&w_star)?;
    trace.backsolve_objective = Some(q_star);
    trace.final_objective = q_star;
    Ok((w_star, trace))
}
