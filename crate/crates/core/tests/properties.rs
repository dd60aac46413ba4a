//! Property-based invariants across the library.

use ndarray::Array2;
use proptest::prelude::*;
use uotod_core::*;

fn bbox_strategy() -> impl Strategy<Value = BBox> {
    (
        0.05f64..0.95,
        0.05f64..0.95,
        0.01f64..0.4,
        0.01f64..0.4,
    )
        .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h).unwrap())
}

/// Random background-augmented instance: costs in [0, 1), constant
/// background column.
fn instance_strategy(
    max_np: usize,
) -> impl Strategy<Value = (CostMatrix, usize, usize)> {
    (1..=max_np)
        .prop_flat_map(move |np| (Just(np), 0..=np))
        .prop_flat_map(|(np, ng)| {
            (
                Just(np),
                Just(ng),
                prop::collection::vec(0.0f64..1.0, np * ng),
                0.1f64..1.2,
            )
        })
        .prop_map(|(np, ng, vals, c_bg)| {
            let mut values = Array2::zeros((np, ng + 1));
            for i in 0..np {
                for j in 0..ng {
                    values[(i, j)] = vals[i * ng + j];
                }
                values[(i, ng)] = c_bg;
            }
            (CostMatrix::with_background(values).unwrap(), np, ng)
        })
}

fn unit_mass_plan_strategy() -> impl Strategy<Value = TransportPlan> {
    (1usize..5, 1usize..6)
        .prop_flat_map(|(n, m)| {
            (
                Just(n),
                Just(m),
                prop::collection::vec(0.001f64..1.0, n * m),
            )
        })
        .prop_map(|(n, m, vals)| {
            let total: f64 = vals.iter().sum();
            let mut values = Array2::zeros((n, m));
            for i in 0..n {
                for j in 0..m {
                    values[(i, j)] = vals[i * m + j] / total;
                }
            }
            TransportPlan::from_array(values).unwrap()
        })
}

proptest! {
    #[test]
    fn iou_and_giou_are_symmetric(a in bbox_strategy(), b in bbox_strategy()) {
        prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(giou(&a, &b), giou(&b, &a));
    }

    #[test]
    fn giou_below_iou_and_cost_range(a in bbox_strategy(), b in bbox_strategy()) {
        let g = giou(&a, &b);
        let i = iou(&a, &b);
        prop_assert!(g <= i + 1e-12);
        let cost = 1.0 - g;
        prop_assert!((0.0..=2.0).contains(&cost));
    }

    #[test]
    fn hungarian_total_matches_brute_force((cost, _, _) in instance_strategy(8)) {
        let h = hungarian(&cost).unwrap();
        let b = brute_force_bm(&cost).unwrap();
        prop_assert_eq!(h.total_cost, b.total_cost);
    }

    #[test]
    fn assignment_plans_are_extreme_points((cost, np, ng) in instance_strategy(7)) {
        let a = hungarian(&cost).unwrap();
        let plan = assignment_to_plan(&a, np, ng);
        let m = prop1_marginals(np, ng).unwrap();
        // In the transport polytope: marginals match exactly.
        prop_assert!(plan.marginal_residual(m.alpha(), m.beta()) < 1e-12);
        // Entries only 0 or 1/np.
        let mass = 1.0 / np as f64;
        for i in 0..np {
            for j in 0..=ng {
                let p = plan.get(i, j);
                prop_assert!(p == 0.0 || p == mass);
            }
        }
    }

    #[test]
    fn closest_per_prediction_rows_sum_to_mass((cost, np, _) in instance_strategy(8)) {
        let plan = closest_per_prediction(&cost);
        let mass = 1.0 / np as f64;
        for r in plan.row_sums() {
            prop_assert_eq!(r, mass);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal(
        u in prop::collection::vec(0.01f64..2.0, 1..6),
        bump in 0.01f64..0.5,
        idx in 0usize..6,
    ) {
        prop_assert_eq!(kl(&u, &u).unwrap(), 0.0);
        let mut v = u.clone();
        let k = idx % v.len();
        v[k] += bump;
        let d = kl(&u, &v).unwrap();
        prop_assert!(d > 0.0, "kl = {} for a perturbed reference", d);
    }

    #[test]
    fn entropy_bounds_hold_for_unit_mass_plans(p in unit_mass_plan_strategy()) {
        let h = entropy(&p);
        let cells = (p.np() * p.cols()) as f64;
        prop_assert!(h >= 1.0 - 1e-12);
        prop_assert!(h <= cells.ln() + 1.0 + 1e-12);
    }

    #[test]
    fn projector_distance_identity(p in unit_mass_plan_strategy()) {
        let proj = project_uniform(&p);
        // Direct Frobenius distance.
        let mut direct = 0.0;
        for i in 0..p.np() {
            for j in 0..p.cols() {
                let d = p.get(i, j) - proj.get(i, j);
                direct += d * d;
            }
        }
        // |P|_F^2 + 1/k - (2/k) * top_k_sum from the projection support.
        let k = proj
            .values()
            .iter()
            .filter(|x| **x > 0.0)
            .count() as f64;
        let frob: f64 = p.values().iter().map(|x| x * x).sum();
        let top_k: f64 = p
            .values()
            .iter()
            .zip(proj.values().iter())
            .filter(|(_, pr)| **pr > 0.0)
            .map(|(x, _)| *x)
            .sum();
        let identity = frob + 1.0 / k - (2.0 / k) * top_k;
        prop_assert!((direct - identity).abs() < 1e-12);
    }

    #[test]
    fn common_measure_divides_every_input(
        nums in prop::collection::vec((1i64..40, 1i64..40), 1..5)
    ) {
        let values: Vec<Rational> = nums
            .iter()
            .map(|(n, d)| Rational::new(*n, *d).unwrap())
            .collect();
        let cm = common_measure(&values).unwrap();
        for v in &values {
            prop_assert!(v.is_multiple_of(&cm));
        }
    }

    #[test]
    fn mining_is_monotone_in_ratio((cost, np, ng) in instance_strategy(8), r1 in 0.5f64..2.0, r2 in 2.0f64..5.0) {
        prop_assume!(ng > 0);
        let plan = assignment_to_plan(&hungarian(&cost).unwrap(), np, ng);
        let losses: Vec<f64> = (0..np).map(|i| 0.1 + 0.37 * (i as f64)).collect();
        let small = select_hard_negatives(&plan, &losses, r1);
        let large = select_hard_negatives(&plan, &losses, r2);
        for row in &small.kept_negative_rows {
            prop_assert!(large.kept_negative_rows.contains(row));
        }
    }

    #[test]
    fn mining_respects_joint_row_permutation((cost, np, ng) in instance_strategy(6)) {
        prop_assume!(np >= 2 && ng >= 1);
        let plan = assignment_to_plan(&hungarian(&cost).unwrap(), np, ng);
        let losses: Vec<f64> = (0..np).map(|i| 0.2 + 0.31 * (i as f64)).collect();
        let base = select_hard_negatives(&plan, &losses, 3.0);

        // Rotate rows by one and rotate the losses identically.
        let rot = |i: usize| (i + 1) % np;
        let mut values = Array2::zeros((np, ng + 1));
        for i in 0..np {
            for j in 0..=ng {
                values[(rot(i), j)] = plan.get(i, j);
            }
        }
        let rotated_plan = TransportPlan::from_array(values).unwrap();
        let mut rotated_losses = vec![0.0; np];
        for i in 0..np {
            rotated_losses[rot(i)] = losses[i];
        }
        let rotated = select_hard_negatives(&rotated_plan, &rotated_losses, 3.0);
        let expected: Vec<usize> = base.kept_negative_rows.iter().map(|i| rot(*i)).collect();
        prop_assert_eq!(rotated.kept_negative_rows, expected);
        prop_assert!((rotated.n_neg_kept - base.n_neg_kept).abs() < 1e-12);
    }

    #[test]
    fn balanced_residual_stopping_is_honest((cost, np, ng) in instance_strategy(8)) {
        let m = prop1_marginals(np, ng).unwrap();
        let cfg = SolverConfig::balanced(0.2)
            .with_residual_tol(1e-6)
            .with_max_iters(100_000);
        let (plan, state) = sinkhorn(&cost, &m, &cfg).unwrap();
        prop_assert!(state.final_residual <= 1e-6);
        // Recomputed from the emitted plan, independent of the loop.
        prop_assert!(plan.marginal_residual(m.alpha(), m.beta()) <= 2e-6);
    }
}

#[test]
fn prop1_entries_are_multiples_of_the_common_measure() {
    // The marginal entries over denominator np have common measure 1/np,
    // and assignment plans only carry entries 0 and 1/np.
    for (np, ng) in [(5usize, 2usize), (7, 7), (6, 0), (9, 4)] {
        let mut entries = vec![Rational::new(1, np as i64).unwrap(); np + ng];
        if np > ng {
            entries.push(Rational::new((np - ng) as i64, np as i64).unwrap());
        }
        let cm = common_measure(&entries).unwrap();
        assert_eq!(cm, Rational::new(1, np as i64).unwrap());
    }
}

#[test]
fn uniform_match_family_counts_and_diameter_for_tiny_sizes() {
    // All nonempty supports of a 2 x 2 plan: 2^4 - 1 uniform matches.
    let cells = 4usize;
    let mut plans = Vec::new();
    for mask in 1u32..(1 << cells) {
        let k = mask.count_ones() as f64;
        let mut values = Array2::zeros((2, 2));
        for c in 0..cells {
            if mask & (1 << c) != 0 {
                values[(c / 2, c % 2)] = 1.0 / k;
            }
        }
        plans.push(TransportPlan::from_array(values).unwrap());
    }
    assert_eq!(plans.len(), (1 << cells) - 1);

    let mut diam: f64 = 0.0;
    for a in &plans {
        for b in &plans {
            let mut d = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let x = a.get(i, j) - b.get(i, j);
                    d += x * x;
                }
            }
            diam = diam.max(d.sqrt());
        }
    }
    assert!((diam - 2.0f64.sqrt()).abs() < 1e-12);
}
