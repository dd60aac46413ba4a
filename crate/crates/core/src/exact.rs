//! Unregularized limit-case solvers: Hungarian bipartite matching, the
//! exhaustive oracle, and the closed-form closest-match solutions.

use crate::cost::CostMatrix;
use crate::error::{MatchError, Result};
use crate::plan::TransportPlan;

/// An injective assignment of ground truths to predictions.
///
/// `gt_to_pred[j]` is the prediction matched to ground truth `j`;
/// `total_cost` is the sum of the matched cost entries, accumulated in
/// column order so that equal assignments from different solvers produce
/// bitwise-equal totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub gt_to_pred: Vec<usize>,
    pub total_cost: f64,
}

fn matched_total(cost: &CostMatrix, gt_to_pred: &[usize]) -> f64 {
    let mut total = 0.0;
    for (j, &i) in gt_to_pred.iter().enumerate() {
        total += cost.get(i, j);
    }
    total
}

/// Minimum-cost injective assignment of the `ng` real ground-truth columns
/// to prediction rows, via shortest augmenting paths with dual potentials.
///
/// The background column, when present, is ignored: its cost is constant and
/// cannot change the argmin. Runs in `O(ng^2 np)` on the rectangular
/// instance directly, without square padding.
pub fn hungarian(cost: &CostMatrix) -> Result<Assignment> {
    let np = cost.np();
    let ng = cost.ng();
    if ng > np {
        return Err(MatchError::Infeasible { np, ng });
    }
    if ng == 0 {
        return Ok(Assignment {
            gt_to_pred: Vec::new(),
            total_cost: 0.0,
        });
    }

    // 1-indexed Jonker-Volgenant style augmentation. "Rows" of the dual
    // problem are ground truths, "columns" are predictions.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; ng + 1];
    let mut v = vec![0.0; np + 1];
    let mut pred_to_gt = vec![0usize; np + 1]; // 0 = unassigned
    let mut way = vec![0usize; np + 1];

    for j in 1..=ng {
        pred_to_gt[0] = j;
        let mut i0 = 0usize; // current prediction column (0 is virtual)
        let mut minv = vec![inf; np + 1];
        let mut used = vec![false; np + 1];
        loop {
            used[i0] = true;
            let j0 = pred_to_gt[i0];
            let mut delta = inf;
            let mut i1 = 0usize;
            for i in 1..=np {
                if used[i] {
                    continue;
                }
                let cur = cost.get(i - 1, j0 - 1) - u[j0] - v[i];
                if cur < minv[i] {
                    minv[i] = cur;
                    way[i] = i0;
                }
                if minv[i] < delta {
                    delta = minv[i];
                    i1 = i;
                }
            }
            for i in 0..=np {
                if used[i] {
                    u[pred_to_gt[i]] += delta;
                    v[i] -= delta;
                } else {
                    minv[i] -= delta;
                }
            }
            i0 = i1;
            if pred_to_gt[i0] == 0 {
                break;
            }
        }
        // Walk the augmenting path back, flipping assignments.
        while i0 != 0 {
            let i1 = way[i0];
            pred_to_gt[i0] = pred_to_gt[i1];
            i0 = i1;
        }
    }

    let mut gt_to_pred = vec![usize::MAX; ng];
    for i in 1..=np {
        if pred_to_gt[i] != 0 {
            gt_to_pred[pred_to_gt[i] - 1] = i - 1;
        }
    }
    debug_assert!(gt_to_pred.iter().all(|&i| i != usize::MAX));
    let total_cost = matched_total(cost, &gt_to_pred);
    Ok(Assignment {
        gt_to_pred,
        total_cost,
    })
}

const BRUTE_FORCE_LIMIT: usize = 9;

/// Exhaustive minimum over all injective maps of ground truths into
/// predictions. Test oracle for [`hungarian`]; refuses `np > 9`.
///
/// Maps are enumerated in lexicographic order and replaced only on strict
/// improvement, so ties resolve to the lexicographically smallest map.
pub fn brute_force_bm(cost: &CostMatrix) -> Result<Assignment> {
    let np = cost.np();
    let ng = cost.ng();
    if np > BRUTE_FORCE_LIMIT {
        return Err(MatchError::SizeGuard {
            np,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if ng > np {
        return Err(MatchError::Infeasible { np, ng });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(ng);
    let mut taken = vec![false; np];

    fn recurse(
        cost: &CostMatrix,
        ng: usize,
        current: &mut Vec<usize>,
        taken: &mut [bool],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if current.len() == ng {
            let total = matched_total(cost, current);
            let better = match best {
                Some((b, _)) => total < *b,
                None => true,
            };
            if better {
                *best = Some((total, current.clone()));
            }
            return;
        }
        for i in 0..cost.np() {
            if !taken[i] {
                taken[i] = true;
                current.push(i);
                recurse(cost, ng, current, taken, best);
                current.pop();
                taken[i] = false;
            }
        }
    }

    recurse(cost, ng, &mut current, &mut taken, &mut best);
    let (total_cost, gt_to_pred) = best.expect("ng <= np guarantees at least one map");
    Ok(Assignment {
        gt_to_pred,
        total_cost,
    })
}

/// Expands an assignment into the `{0, 1/np}` transport plan of the
/// background-augmented instance: matched cells carry `1/np`, every
/// unmatched prediction carries `1/np` in the background column.
pub fn assignment_to_plan(a: &Assignment, np: usize, ng: usize) -> TransportPlan {
    assert_eq!(a.gt_to_pred.len(), ng, "assignment covers every ground truth");
    let mass = 1.0 / np as f64;
    let mut plan = TransportPlan::zeros(np, ng + 1);
    let mut matched = vec![false; np];
    for (j, &i) in a.gt_to_pred.iter().enumerate() {
        plan.set(i, j, mass);
        matched[i] = true;
    }
    for (i, m) in matched.iter().enumerate() {
        if !m {
            plan.set(i, ng, mass);
        }
    }
    plan
}

/// Matches each prediction to its cheapest column (background included, so
/// the constant background cost acts as a threshold), placing mass `1/np`
/// there. Ties go to the lowest column index.
pub fn closest_per_prediction(cost: &CostMatrix) -> TransportPlan {
    let np = cost.np();
    let mass = 1.0 / np as f64;
    let mut plan = TransportPlan::zeros(np, cost.cols());
    for i in 0..np {
        let mut best = 0;
        for j in 1..cost.cols() {
            if cost.get(i, j) < cost.get(i, best) {
                best = j;
            }
        }
        plan.set(i, best, mass);
    }
    plan
}

/// Matches each real ground-truth column to its cheapest prediction row with
/// mass `1/np`; several columns may claim the same row. Rows claimed by no
/// column put their `1/np` mass in the background column when one exists.
pub fn closest_per_groundtruth(cost: &CostMatrix) -> Result<TransportPlan> {
    let np = cost.np();
    let ng = cost.ng();
    if ng == 0 {
        return Err(MatchError::EmptyInput("ground truths"));
    }
    let mass = 1.0 / np as f64;
    let mut plan = TransportPlan::zeros(np, cost.cols());
    let mut claimed = vec![false; np];
    for j in 0..ng {
        let mut best = 0;
        for i in 1..np {
            if cost.get(i, j) < cost.get(best, j) {
                best = i;
            }
        }
        plan.set(best, j, mass);
        claimed[best] = true;
    }
    if cost.has_background() {
        for (i, c) in claimed.iter().enumerate() {
            if !c {
                plan.set(i, ng, mass);
            }
        }
    }
    Ok(plan)
}
