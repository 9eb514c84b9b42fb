mod common;

use common::*;
use falcon_core::select::GroupedSorted;
use falcon_core::{
    brute_force_ilp, dual_value, eval_mask, g_of_lambda2, recover_fractional_primal,
    round_to_binary, solve_dual, solve_ilp, Budgets, GroupedInstance, IlpOptions, Mask,
};
use proptest::prelude::*;
use rand::Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn weak_duality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 20, 4);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        let mask = Mask::from((0..inst.len()).map(|_| r.gen_bool(0.3)).collect::<Vec<_>>());
        let rep = eval_mask(&mask, &inst, &b).unwrap();
        let l1 = r.gen_range(0.0..10.0);
        let l2 = r.gen_range(0.0..10.0);
        let d = dual_value(&gs, &b, l1, l2).unwrap();
        if rep.feasible {
            prop_assert!(d >= rep.objective - 1e-9);
        }
        let naive = naive_dual(&inst, b.nnz.unwrap(), b.flops.unwrap(), l1, l2);
        prop_assert!(rel_close(d, naive, 1e-12));
    }

    #[test]
    fn g_is_convex(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 30, 5);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        let hi = gs.max_ratio().max(1.0);
        let a = r.gen_range(0.0..hi);
        let c = r.gen_range(a..=hi);
        let mid = 0.5 * (a + c);
        let ga = g_of_lambda2(&gs, &b, a).unwrap().0;
        let gb = g_of_lambda2(&gs, &b, mid).unwrap().0;
        let gc = g_of_lambda2(&gs, &b, c).unwrap().0;
        prop_assert!(gb <= 0.5 * (ga + gc) + 1e-9);
    }

    #[test]
    fn g_matches_naive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 60, 8);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        let l2 = r.gen_range(0.0..(2.0 * gs.max_ratio()).max(1.0));
        let (g, l1) = g_of_lambda2(&gs, &b, l2).unwrap();
        let (ng, nl1) = naive_g(&inst, b.nnz.unwrap(), b.flops.unwrap(), l2);
        prop_assert!(rel_close(g, ng, 1e-10), "{g} vs {ng}");
        prop_assert!(rel_close(l1, nl1, 1e-12));
    }

    #[test]
    fn shifted_selection_and_positive_part_match_naive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 500, 10);
        let gs = GroupedSorted::build(&inst);
        let costs = inst.groups.per_parameter_costs();
        let l2 = r.gen_range(0.0..5.0);
        let s = r.gen_range(1..=inst.len());
        let mut v: Vec<f64> = inst.importance.iter().zip(&costs).map(|(i, c)| i - l2 * c).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(gs.shifted_sth_largest(l2, s).unwrap(), v[s - 1]);

        let l1 = r.gen_range(-2.0..8.0);
        let (sum, count) = gs.positive_part_sum(l1, l2);
        let terms: Vec<f64> = inst
            .importance
            .iter()
            .zip(&costs)
            .map(|(i, c)| i - l1 - c * l2)
            .filter(|&t| t > 0.0)
            .collect();
        prop_assert_eq!(count, terms.len());
        prop_assert!(rel_close(sum, terms.iter().sum(), 1e-12));
    }

    #[test]
    fn gap_certificate_and_feasibility(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 14, 4);
        let b = random_budgets(&mut r, &inst.groups);
        let res = solve_ilp(&inst, &b, &IlpOptions::default()).unwrap();
        let rep = eval_mask(&res.mask, &inst, &b).unwrap();
        prop_assert!(rep.feasible);
        prop_assert_eq!(rep.objective, res.objective);
        let best = exhaustive_optimum(&inst, &b);
        prop_assert!(res.objective <= best + 1e-9);
        prop_assert!(res.upper_bound >= best - 1e-7 * (1.0 + best));
        if best > 0.0 {
            prop_assert!((best - res.objective) / best <= res.gap_bound + 1e-9);
        }
    }

    #[test]
    fn dual_bounds_integer_optimum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 14, 4);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        if gs.max_ratio() > 0.0 {
            let d = solve_dual(&gs, &b, 1e-10 * gs.max_ratio()).unwrap();
            let exact = brute_force_ilp(&inst, &b).unwrap();
            prop_assert!(d.value >= exact.objective - 1e-9);
        }
    }

    #[test]
    fn greedy_fill_only_adds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 20, 4);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        if gs.max_ratio() > 0.0 {
            let d = solve_dual(&gs, &b, 1e-10 * gs.max_ratio()).unwrap();
            let eps = 1e-9 * gs.max_importance().max(1.0) + 1e-8;
            if let Ok(pr) = recover_fractional_primal(&gs, &b, &d, eps) {
                let base = Mask::from(pr.z.iter().map(|&z| z >= 1.0).collect::<Vec<_>>());
                let mask = round_to_binary(&pr, &inst, &b);
                prop_assert!(eval_mask(&mask, &inst, &b).unwrap().feasible);
                if eval_mask(&base, &inst, &b).unwrap().feasible {
                    prop_assert!(base.is_subset_of(&mask));
                    prop_assert!(inst.objective(&mask) >= inst.objective(&base));
                }
            }
        }
    }

    #[test]
    fn fractional_primal_is_relaxation_feasible(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 40, 6);
        let b = random_budgets(&mut r, &inst.groups);
        let gs = GroupedSorted::build(&inst);
        if gs.max_ratio() > 0.0 {
            let d = solve_dual(&gs, &b, 1e-10 * gs.max_ratio()).unwrap();
            let eps = 1e-9 * gs.max_importance() + 1e-8;
            if let Ok(pr) = recover_fractional_primal(&gs, &b, &d, eps) {
                let costs = inst.groups.per_parameter_costs();
                let count: f64 = pr.z.iter().sum();
                let flops: f64 = pr.z.iter().zip(&costs).map(|(z, c)| z * c).sum();
                prop_assert!(count <= b.nnz.unwrap() as f64 + 1e-9);
                prop_assert!(flops <= b.flops.unwrap() * (1.0 + 1e-9) + 1e-9);
                for range in inst.groups.ranges() {
                    let frac = range.filter(|&i| pr.z[i] > 0.0 && pr.z[i] < 1.0).count();
                    prop_assert!(frac <= 1);
                }
            }
        }
    }

    #[test]
    fn brute_force_matches_direct_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 12, 3);
        let b = random_budgets(&mut r, &inst.groups);
        let exact = brute_force_ilp(&inst, &b).unwrap();
        prop_assert!(eval_mask(&exact.mask, &inst, &b).unwrap().feasible);
        prop_assert!(rel_close(exact.objective, exhaustive_optimum(&inst, &b), 1e-12));
    }

    #[test]
    fn single_constraint_modes_are_optimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 14, 4);
        let s = r.gen_range(0..=inst.len());
        let res = solve_ilp(&inst, &Budgets::nnz_only(s), &IlpOptions::default()).unwrap();
        prop_assert_eq!(res.objective, exhaustive_optimum(&inst, &Budgets::nnz_only(s)));
        let f = r.gen_range(0.0..inst.groups.dense_flops());
        let res = solve_ilp(&inst, &Budgets::flops_only(f), &IlpOptions::default()).unwrap();
        prop_assert!(eval_mask(&res.mask, &inst, &Budgets::flops_only(f)).unwrap().feasible);
        prop_assert!(res.upper_bound >= exhaustive_optimum(&inst, &Budgets::flops_only(f)) - 1e-9);
    }
}

#[test]
fn unique_integral_lp_optimum_recovers_binary_point() {
    let inst = GroupedInstance::from_parts(
        vec![0, 2, 5],
        vec![1.0, 3.0],
        vec![5.0, 4.0, 1.0, 0.5, 0.25],
    )
    .unwrap();
    let gs = GroupedSorted::build(&inst);

    let b = Budgets::joint(2, 2.5);
    let d = solve_dual(&gs, &b, 1e-10 * gs.max_ratio()).unwrap();
    assert!((d.value - 9.0).abs() < 1e-8);
    let pr = recover_fractional_primal(&gs, &b, &d, 1e-9 * 5.0).unwrap();
    assert_eq!(pr.z, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    assert!(pr.fractional().is_empty());

    let b = Budgets::joint(5, 12.0);
    let d = solve_dual(&gs, &b, 1e-10 * gs.max_ratio()).unwrap();
    let pr = recover_fractional_primal(&gs, &b, &d, 1e-9 * 5.0).unwrap();
    assert!(pr.z2().is_empty(), "{pr:?}");
    assert_eq!(pr.z, vec![1.0; 5]);
    assert_eq!(round_to_binary(&pr, &inst, &b), Mask::ones(5));
}

#[test]
fn base_rounding_example() {
    let inst = GroupedInstance::from_parts(vec![0, 2, 4], vec![2.0, 1.0], vec![4.0, 3.0, 2.0, 1.0])
        .unwrap();
    let gs = GroupedSorted::build(&inst);
    let b = Budgets::joint(2, 3.0);
    let d = falcon_core::DualPoint {
        lambda1: 1.0,
        lambda2: 1.0,
        value: 6.0,
    };
    let pr = recover_fractional_primal(&gs, &b, &d, 1e-9).unwrap();
    let base: Vec<usize> = pr.z1();
    assert_eq!(base, vec![0]);
    assert_eq!(inst.objective(&Mask::from_indices(4, base)), 4.0);
    let mask = round_to_binary(&pr, &inst, &b);
    assert_eq!(mask, Mask::from(vec![true, false, true, false]));
}
