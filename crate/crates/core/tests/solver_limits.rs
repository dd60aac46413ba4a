//! Limit-case behavior of the scaling solvers: recovery of the exact
//! assignment as the regularization vanishes, closed-form one-iteration
//! identities, uniqueness, and agreement between plain and log-domain modes.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uotod_core::*;

fn random_instance(np: usize, ng: usize, c_bg: f64, seed: u64) -> (CostMatrix, MarginalPair) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((np, ng + 1));
    for i in 0..np {
        for j in 0..ng {
            values[(i, j)] = rng.random_range(0.0..1.0);
        }
        values[(i, ng)] = c_bg;
    }
    (
        CostMatrix::with_background(values).unwrap(),
        prop1_marginals(np, ng).unwrap(),
    )
}

#[test]
fn transport_cost_decreases_toward_the_assignment_optimum_as_eps_shrinks() {
    let (cost, m) = random_instance(6, 4, 0.8, 20);
    let optimum = assignment_to_plan(&hungarian(&cost).unwrap(), 6, 4).transport_cost(&cost);

    let mut eps = 1.0;
    let mut previous = f64::INFINITY;
    let mut last = f64::INFINITY;
    while eps > 0.9e-3 {
        let cfg = SolverConfig::balanced(eps)
            .stabilized()
            .with_residual_tol(1e-9)
            .with_max_iters(20_000);
        let (plan, _) = sinkhorn(&cost, &m, &cfg).unwrap();
        let value = plan.transport_cost(&cost);
        assert!(
            value <= previous + 1e-9,
            "transport cost rose from {previous} to {value} at eps = {eps}"
        );
        previous = value;
        last = value;
        eps /= 2.0;
    }
    assert!(last >= optimum - 1e-9, "regularized cost cannot beat the optimum");
    assert!(
        (last - optimum).abs() < 1e-3,
        "limit {last} vs optimum {optimum}"
    );
}

#[test]
fn solution_is_unique_across_initializations() {
    let (cost, m) = random_instance(5, 3, 0.8, 33);
    let cfg = SolverConfig::balanced(0.15)
        .with_residual_tol(1e-12)
        .with_max_iters(200_000);
    let (p1, _) = sinkhorn(&cost, &m, &cfg).unwrap();
    let v0: Vec<f64> = (0..m.beta().len()).map(|j| 0.3 + 0.5 * j as f64).collect();
    let (p2, _) = sinkhorn_with_init(&cost, &m, &cfg, &v0).unwrap();
    for i in 0..5 {
        for j in 0..4 {
            assert!(
                (p1.get(i, j) - p2.get(i, j)).abs() < 1e-9,
                "plans differ at ({i}, {j})"
            );
        }
    }
}

#[test]
fn log_domain_and_plain_agree_at_moderate_regularization() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20 {
        let np = rng.random_range(2..=10usize);
        let ng = rng.random_range(0..=np);
        let mut values = Array2::zeros((np, ng + 1));
        for i in 0..np {
            for j in 0..=ng {
                values[(i, j)] = rng.random_range(0.0..10.0);
            }
        }
        let cost = CostMatrix::with_background(values).unwrap();
        let m = prop1_marginals(np, ng).unwrap();
        let eps = rng.random_range(0.1..2.0);
        let max_iters = rng.random_range(5..60usize);
        let cfg = SolverConfig::balanced(eps).with_max_iters(max_iters);
        let (plain, _) = sinkhorn(&cost, &m, &cfg).unwrap();
        let (logd, _) = sinkhorn(&cost, &m, &cfg.stabilized()).unwrap();
        for i in 0..np {
            for j in 0..=ng {
                assert!(
                    (plain.get(i, j) - logd.get(i, j)).abs() < 1e-9,
                    "trial {trial}: modes differ at ({i}, {j})"
                );
            }
        }
    }
}

#[test]
fn log_domain_and_plain_agree_for_unbalanced_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let np = rng.random_range(2..=8usize);
        let ng = rng.random_range(1..=np);
        let (cost, m) = random_instance(np, ng, 0.8, rng.random_range(0..1000));
        let eps = rng.random_range(0.1..1.0);
        let tau = |r: &mut ChaCha8Rng| match r.random_range(0..3) {
            0 => Tau::Finite(0.0),
            1 => Tau::Finite(r.random_range(0.01..5.0)),
            _ => Tau::Infinite,
        };
        let cfg = SolverConfig::unbalanced(eps, tau(&mut rng), tau(&mut rng)).with_max_iters(30);
        let (plain, _) = unbalanced_scaling(&cost, &m, &cfg).unwrap();
        let (logd, _) = unbalanced_scaling(&cost, &m, &cfg.stabilized()).unwrap();
        for i in 0..np {
            for j in 0..=ng {
                assert!((plain.get(i, j) - logd.get(i, j)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn one_sided_limits_reach_an_exact_fixed_point_after_two_sweeps() {
    let (cost, m) = random_instance(7, 3, 0.8, 5);
    let cfg = SolverConfig::unbalanced(1.0, Tau::Finite(0.0), Tau::Infinite)
        .with_residual_tol(1e-300)
        .with_max_iters(100);
    // Even with an absurdly small tolerance the change hits exactly zero.
    let (_, state) = unbalanced_scaling(&cost, &m, &cfg).unwrap();
    assert_eq!(state.iterations_run, 2);
    assert_eq!(state.final_residual, 0.0);
}

#[test]
fn one_iteration_from_uniform_duals_with_background_weighting() {
    let (np, ng) = (5usize, 2usize);
    let (cost, m) = random_instance(np, ng, 0.8, 77);
    let eps = 0.7;
    let plan = sinkhorn_one_iteration(&cost, &m, eps).unwrap();
    // Closed form: (ng + 1) * beta_j * K_ij / (rowsum_i * colsum_j).
    let k = |i: usize, j: usize| (-cost.get(i, j) / eps).exp();
    for i in 0..np {
        let rowsum: f64 = (0..=ng).map(|j| k(i, j)).sum();
        for j in 0..=ng {
            let colsum: f64 = (0..np).map(|r| k(r, j)).sum();
            let expected = (ng + 1) as f64 * m.beta()[j] * k(i, j) / (rowsum * colsum);
            assert!(
                (plan.get(i, j) - expected).abs() < 1e-12,
                "({i}, {j}): {} vs {expected}",
                plan.get(i, j)
            );
        }
    }
    // The background column carries the (np - ng) relative weight against
    // a real column, entry by entry.
    for i in 0..np {
        let colsum_bg: f64 = (0..np).map(|r| k(r, ng)).sum();
        let colsum_0: f64 = (0..np).map(|r| k(r, 0)).sum();
        let lhs = plan.get(i, ng) * colsum_bg / k(i, ng);
        let rhs = (np - ng) as f64 * plan.get(i, 0) * colsum_0 / k(i, 0);
        assert!((lhs - rhs).abs() < 1e-9);
    }
}

#[test]
fn small_eps_row_limit_matches_closest_prediction() {
    // tau1 = inf, tau2 = 0 at small eps: per-row argmax of the plan equals
    // the row argmin of the cost, including background thresholding.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..30 {
        let np = rng.random_range(2..=12usize);
        let ng = rng.random_range(1..=np.min(6));
        let (cost, m) = random_instance(np, ng, 0.8, 2000 + trial);
        let cfg = SolverConfig::unbalanced(1e-3, Tau::Infinite, Tau::Finite(0.0))
            .stabilized()
            .with_residual_tol(1e-12)
            .with_max_iters(50);
        let (plan, _) = unbalanced_scaling(&cost, &m, &cfg).unwrap();
        let reference = closest_per_prediction(&cost);
        let lhs = plan.row_argmax();
        let rhs = reference.row_argmax();
        assert_eq!(lhs, rhs, "trial {trial}");
    }
}
