//! Hard-negative mining over fractional transport plans.
//!
//! The background column of the plan carries the negative mass; positives
//! and negatives are counted as `np` times the respective column masses so
//! that plans with exact background-augmented marginals reproduce the
//! integer counts `(ng, np - ng)` of the binary matching.

use crate::numeric::kahan_sum;
use crate::plan::TransportPlan;

/// Outcome of hard-negative selection.
///
/// `kept_negative_rows` is ordered by descending background-weighted
/// confidence loss (ties by ascending row index); the mass of kept rows
/// never exceeds `ratio * n_pos`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningResult {
    pub kept_negative_rows: Vec<usize>,
    pub n_pos: f64,
    pub n_neg_total: f64,
    pub n_neg_kept: f64,
}

/// Positive and negative mass counts of a plan with `ng + 1` columns:
/// `n_pos = np * sum of the real columns`, `n_neg = np * background column`.
pub fn count_positives_negatives(p: &TransportPlan, np: usize, ng: usize) -> (f64, f64) {
    assert_eq!(p.np(), np, "plan row count");
    assert_eq!(p.cols(), ng + 1, "plan must carry a background column");
    let npf = np as f64;
    let n_neg = npf * kahan_sum((0..np).map(|i| p.get(i, ng)));
    let n_pos = npf
        * kahan_sum(
            (0..np).flat_map(|i| (0..ng).map(move |j| (i, j))).map(|(i, j)| p.get(i, j)),
        );
    (n_pos, n_neg)
}

/// Keeps the background-matched predictions with the highest weighted
/// confidence loss `P[i, bg] * loss[i]`, admitting the sorted prefix whose
/// background mass stays within `ratio * n_pos`; a row that would cross the
/// budget is excluded entirely.
pub fn select_hard_negatives(
    p: &TransportPlan,
    confidence_loss: &[f64],
    ratio: f64,
) -> MiningResult {
    let np = p.np();
    let ng = p.cols() - 1;
    assert_eq!(confidence_loss.len(), np, "one loss per prediction");
    assert!(
        confidence_loss.iter().all(|l| l.is_finite() && *l >= 0.0),
        "losses must be finite and nonnegative"
    );
    assert!(ratio > 0.0, "ratio must be positive");

    let (n_pos, n_neg_total) = count_positives_negatives(p, np, ng);
    let npf = np as f64;
    let budget = ratio * n_pos;

    let mut candidates: Vec<usize> = (0..np).filter(|i| p.get(*i, ng) > 0.0).collect();
    candidates.sort_by(|a, b| {
        let wa = p.get(*a, ng) * confidence_loss[*a];
        let wb = p.get(*b, ng) * confidence_loss[*b];
        wb.partial_cmp(&wa).unwrap().then(a.cmp(b))
    });

    let slack = budget.abs() * 1e-12 + 1e-15;
    let mut kept = Vec::new();
    let mut cum_mass = 0.0;
    for i in candidates {
        let next = cum_mass + p.get(i, ng);
        if npf * next > budget + slack {
            break;
        }
        cum_mass = next;
        kept.push(i);
    }

    MiningResult {
        kept_negative_rows: kept,
        n_pos,
        n_neg_total,
        n_neg_kept: npf * cum_mass,
    }
}
