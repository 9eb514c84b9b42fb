//! Plain-text `key=value` solve report with a per-group sparsity table.

use std::fmt::Write as _;

use crate::problem::{Budgets, GroupStructure, Mask};
use crate::projection::Projection;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub size: usize,
    pub kept: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub p: usize,
    pub nnz: usize,
    pub flops: f64,
    pub dense_flops: f64,
    pub budgets: Budgets,
    pub feasible: bool,
    pub mode: Option<&'static str>,
    /// Retained importance `sum I_i z_i`.
    pub objective: Option<f64>,
    pub q_l: Option<f64>,
    pub dual_value: Option<f64>,
    pub gap_bound: Option<f64>,
    pub groups: Vec<GroupRow>,
}

impl Report {
    pub fn new(command: &str, mask: &Mask, groups: &GroupStructure, budgets: &Budgets) -> Self {
        let counts = groups.counts_of(mask);
        let nnz = mask.nnz();
        let flops = groups.flops_of_counts(&counts);
        Self {
            command: command.to_string(),
            p: mask.len(),
            nnz,
            flops,
            dense_flops: groups.dense_flops(),
            budgets: *budgets,
            feasible: budgets.admits(nnz, flops),
            mode: None,
            objective: None,
            q_l: None,
            dual_value: None,
            gap_bound: None,
            groups: groups
                .ranges()
                .zip(counts)
                .zip(groups.flop_costs())
                .map(|((r, kept), &cost)| GroupRow {
                    size: r.len(),
                    kept,
                    cost,
                })
                .collect(),
        }
    }

    /// Report of a selection: mask counts plus the certificate of the solve.
    pub fn for_projection(
        command: &str,
        pr: &Projection,
        groups: &GroupStructure,
        budgets: &Budgets,
    ) -> Self {
        let mut report = Self::new(command, &pr.mask, groups, budgets);
        report.mode = Some(pr.selection.mode.as_str());
        report.objective = Some(pr.selection.objective);
        report.dual_value = Some(pr.selection.upper_bound);
        report.gap_bound = Some(pr.selection.gap_bound);
        report
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        line("command", self.command.clone());
        if let Some(mode) = self.mode {
            line("mode", mode.to_string());
        }
        line("p", self.p.to_string());
        line("nnz", self.nnz.to_string());
        line("flops", self.flops.to_string());
        line("dense_flops", self.dense_flops.to_string());
        line(
            "nnz_budget",
            self.budgets
                .nnz
                .map_or_else(|| "none".to_string(), |s| s.to_string()),
        );
        line("flop_budget", opt(self.budgets.flops));
        line("feasible", self.feasible.to_string());
        if self.objective.is_some() {
            line("objective", opt(self.objective));
        }
        if self.q_l.is_some() {
            line("Q_L", opt(self.q_l));
        }
        if self.dual_value.is_some() {
            line("dual_value", opt(self.dual_value));
        }
        if self.gap_bound.is_some() {
            line("gap_bound", opt(self.gap_bound));
        }
        line("num_groups", self.groups.len().to_string());
        for (j, g) in self.groups.iter().enumerate() {
            let density = if g.size == 0 {
                0.0
            } else {
                g.kept as f64 / g.size as f64
            };
            line(
                &format!("group.{}", j + 1),
                format!(
                    "size={} kept={} density={} cost={} flops={}",
                    g.size,
                    g.kept,
                    density,
                    g.cost,
                    g.kept as f64 * g.cost
                ),
            );
        }
        out
    }
}

/// Value of `key` in a rendered report.
pub fn lookup<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k == key).then_some(v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{budgets_a, instance_a};

    #[test]
    fn zero_mask_report() {
        let groups = instance_a().groups;
        let text = Report::new("eval", &Mask::zeros(4), &groups, &budgets_a()).render();
        assert_eq!(lookup(&text, "nnz"), Some("0"));
        assert_eq!(lookup(&text, "flops"), Some("0"));
        assert_eq!(lookup(&text, "feasible"), Some("true"));
    }

    #[test]
    fn per_group_table() {
        let groups = instance_a().groups;
        let mask = Mask::from(vec![true, false, true, false]);
        let mut r = Report::new("prune-mp", &mask, &groups, &budgets_a());
        r.gap_bound = Some(1.0);
        let text = r.render();
        assert_eq!(lookup(&text, "gap_bound"), Some("1"));
        assert_eq!(
            lookup(&text, "group.1"),
            Some("size=2 kept=1 density=0.5 cost=2 flops=2")
        );
        assert_eq!(lookup(&text, "flops"), Some("3"));
    }
}
