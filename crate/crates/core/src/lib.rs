//! Pruning a parameter vector under joint NNZ and FLOP budgets.
//!
//! The selection problem `max sum I_i z_i` subject to a nonzero cap `S` and a
//! FLOP cap `F` is solved through its LP dual ([`ilp`]), which also gives the
//! Euclidean projection onto the doubly-constrained set ([`projection`]).
//! On top of that, [`dfo`] minimises a block low-rank quadratic loss model
//! ([`quadratic`]) by projected gradient steps with an active set and an exact
//! restricted backsolve, and [`multistage`] chains such solves along a
//! decreasing budget schedule.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod dfo;
pub mod error;
pub mod ilp;
pub mod multistage;
pub mod problem;
pub mod projection;
pub mod quadratic;
pub mod report;
pub mod select;

#[cfg(test)]
mod testutil;

pub use bundle::{read_bundle, write_bundle, write_result, BundleMeta, ProblemBundle};
pub use dfo::{
    act_dfo, backsolve, backsolve_block, bso_dfo, dfo_step, DfoConfig, RoundRecord, SolveTrace,
};
pub use error::{FalconError, Result};
pub use ilp::{
    brute_force_ilp, dual_value, g_of_lambda2, recover_fractional_primal, round_to_binary,
    solve_dual, solve_ilp, DualPoint, FractionalPrimal, IlpOptions, KktClass, SelectionMode,
    SelectionResult,
};
pub use multistage::{
    falcon_pp, schedule_budgets, BudgetSchedule, StageModel, StageProvider, StaticProvider,
    SubprocessProvider,
};
pub use problem::{eval_mask, Budgets, GroupStructure, GroupedInstance, Mask, MaskReport, Violation};
pub use projection::{project, project_restricted, Projection};
pub use quadratic::{subdivide_blocks, LowRankQuadratic};
pub use report::Report;
pub use select::{largesort, largesort_traced, GroupedSorted, Selection};
