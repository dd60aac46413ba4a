//! Entropic solvers: Sinkhorn iterations for balanced transport, the
//! KL-penalized unbalanced scaling variant, log-domain stabilized versions
//! of both, closed-form softmax fast paths, and batched execution.

use ndarray::Array2;
use rayon::prelude::*;

use crate::cost::{CostMatrix, MarginalPair};
use crate::error::{MatchError, Result};
use crate::numeric::{kahan_sum, logsumexp};
use crate::plan::TransportPlan;

/// A marginal constraint strength. `Infinite` is a dedicated flag rather
/// than a large float so the scaling exponent is exactly 1 and the balanced
/// path stays bit-stable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Finite(f64),
    Infinite,
}

impl Tau {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Tau::Infinite)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Tau::Finite(t) if *t == 0.0)
    }

    /// The scaling exponent `tau / (tau + epsilon)`; 1 exactly for the
    /// infinite flag, 0 exactly for `tau = 0`.
    fn exponent(&self, epsilon: f64) -> f64 {
        match self {
            Tau::Infinite => 1.0,
            Tau::Finite(t) => t / (t + epsilon),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Tau::Finite(t) if !t.is_finite() || *t < 0.0 => Err(MatchError::InvalidArgument(
                format!("tau must be nonnegative and finite, got {t}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Configuration for the scaling solvers.
///
/// The default stopping policy is a fixed number of iterations
/// (`residual_tol = 0` disables residual stopping); 20 iterations is the
/// working default for matching-time workloads.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub tau1: Tau,
    pub tau2: Tau,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub stabilized: bool,
}

pub const DEFAULT_MAX_ITERS: usize = 20;

impl SolverConfig {
    /// Balanced transport (both constraints hard) at the given regularization.
    pub fn balanced(epsilon: f64) -> Self {
        Self {
            epsilon,
            tau1: Tau::Infinite,
            tau2: Tau::Infinite,
            max_iters: DEFAULT_MAX_ITERS,
            residual_tol: 0.0,
            stabilized: false,
        }
    }

    pub fn unbalanced(epsilon: f64, tau1: Tau, tau2: Tau) -> Self {
        Self {
            tau1,
            tau2,
            ..Self::balanced(epsilon)
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn stabilized(mut self) -> Self {
        self.stabilized = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(MatchError::InvalidArgument(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(MatchError::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.residual_tol >= 0.0 && self.residual_tol.is_finite()) {
            return Err(MatchError::InvalidArgument(
                "residual_tol must be nonnegative and finite".into(),
            ));
        }
        self.tau1.validate()?;
        self.tau2.validate()
    }
}

/// Final dual scaling state of a solver run.
///
/// In plain mode `u` and `v` are the positive scaling vectors of
/// `P = diag(u) K diag(v)`. In stabilized mode they are the log-domain
/// dual potentials `epsilon * log u` and `epsilon * log v`.
///
/// `final_residual` is the stopping metric at termination: the combined l1
/// marginal residual for [`sinkhorn`], the sup-norm change of the scaling
/// state over the last sweep for [`unbalanced_scaling`].
#[derive(Debug, Clone)]
pub struct ScalingState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations_run: usize,
    pub final_residual: f64,
    pub log_domain: bool,
}

fn check_dims(cost: &CostMatrix, m: &MarginalPair) -> Result<()> {
    if m.alpha().len() != cost.np() || m.beta().len() != cost.cols() {
        return Err(MatchError::DimensionMismatch(format!(
            "cost is {}x{} but marginals are {} / {}",
            cost.np(),
            cost.cols(),
            m.alpha().len(),
            m.beta().len()
        )));
    }
    Ok(())
}

fn gibbs_kernel(cost: &CostMatrix, epsilon: f64) -> Array2<f64> {
    cost.values().mapv(|c| (-c / epsilon).exp())
}

/// `out[i] = sum_j k[i,j] v[j]` over the row-major kernel slice.
/// Four partial accumulators break the add-latency chain of the row dot.
fn mat_vec(k: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    let (n, m) = k.dim();
    let ks = k.as_slice().expect("kernel is standard layout");
    for i in 0..n {
        let row = &ks[i * m..(i + 1) * m];
        let mut acc = [0.0f64; 4];
        let chunks = m / 4 * 4;
        let mut j = 0;
        while j < chunks {
            acc[0] += row[j] * v[j];
            acc[1] += row[j + 1] * v[j + 1];
            acc[2] += row[j + 2] * v[j + 2];
            acc[3] += row[j + 3] * v[j + 3];
            j += 4;
        }
        let mut tail = 0.0;
        while j < m {
            tail += row[j] * v[j];
            j += 1;
        }
        out[i] = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail;
    }
}

/// `out[j] = sum_i k[i,j] u[i]`, streamed row-major.
fn mat_t_vec(k: &Array2<f64>, u: &[f64], out: &mut [f64]) {
    let (n, m) = k.dim();
    let ks = k.as_slice().expect("kernel is standard layout");
    out.fill(0.0);
    for i in 0..n {
        let row = &ks[i * m..(i + 1) * m];
        let ui = u[i];
        for j in 0..m {
            out[j] += row[j] * ui;
        }
    }
}

fn plan_from_scalings(k: &Array2<f64>, u: &[f64], v: &[f64]) -> TransportPlan {
    let (n, m) = k.dim();
    let mut values = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            values[(i, j)] = u[i] * k[(i, j)] * v[j];
        }
    }
    TransportPlan::from_array(values).expect("scalings are finite and nonnegative")
}

fn check_positive(xs: &[f64], iteration: usize) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(MatchError::NumericalOverflow { iteration });
    }
    Ok(())
}

fn check_finite(xs: &[f64], iteration: usize) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(MatchError::NumericalOverflow { iteration });
    }
    Ok(())
}

/// Sinkhorn iterations for balanced transport with regularization:
/// `u <- alpha ./ (K v)`, `v <- beta ./ (K' u)` on the Gibbs kernel
/// `K = exp(-C / epsilon)`, with `P = diag(u) K diag(v)`.
///
/// Requires both constraint parameters to be the `Infinite` flag. Stops at
/// `max_iters` sweeps, or earlier when the combined l1 marginal residual
/// drops to `residual_tol` (if nonzero). Plain mode reports a numerical
/// overflow when the kernel degenerates; set `stabilized` to run the same
/// iteration on log-domain potentials instead.
pub fn sinkhorn(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, ScalingState)> {
    let v0 = vec![1.0 / m.beta().len() as f64; m.beta().len()];
    sinkhorn_with_init(cost, m, cfg, &v0)
}

/// [`sinkhorn`] from a caller-supplied strictly positive initial `v`.
pub fn sinkhorn_with_init(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
    v0: &[f64],
) -> Result<(TransportPlan, ScalingState)> {
    cfg.validate()?;
    check_dims(cost, m)?;
    if !(cfg.tau1.is_infinite() && cfg.tau2.is_infinite()) {
        return Err(MatchError::InvalidArgument(
            "sinkhorn requires tau1 = tau2 = infinity; use unbalanced_scaling otherwise".into(),
        ));
    }
    if v0.len() != m.beta().len() {
        return Err(MatchError::DimensionMismatch(format!(
            "initial v has length {}, expected {}",
            v0.len(),
            m.beta().len()
        )));
    }
    if v0.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(MatchError::InvalidArgument(
            "initial v must be strictly positive and finite".into(),
        ));
    }

    if cfg.stabilized {
        return sinkhorn_log(cost, m, cfg, v0);
    }

    let (alpha, beta) = (m.alpha(), m.beta());
    let (np, cols) = (cost.np(), cost.cols());
    let k = gibbs_kernel(cost, cfg.epsilon);

    let mut u = vec![1.0 / np as f64; np];
    let mut v = v0.to_vec();
    let mut kv = vec![0.0; np];
    let mut ktu = vec![0.0; cols];
    let mut iters = 0usize;

    let residual = loop {
        mat_vec(&k, &v, &mut kv);
        check_positive(&kv, iters + 1)?;
        if iters > 0 {
            let row_res = kahan_sum(
                u.iter()
                    .zip(&kv)
                    .zip(alpha)
                    .map(|((ui, kvi), a)| (ui * kvi - a).abs()),
            );
            let col_res = kahan_sum(
                v.iter()
                    .zip(&ktu)
                    .zip(beta)
                    .map(|((vj, ktuj), b)| (vj * ktuj - b).abs()),
            );
            let res = row_res + col_res;
            if (cfg.residual_tol > 0.0 && res <= cfg.residual_tol) || iters >= cfg.max_iters {
                break res;
            }
        }
        for i in 0..np {
            u[i] = alpha[i] / kv[i];
        }
        check_finite(&u, iters + 1)?;
        mat_t_vec(&k, &u, &mut ktu);
        check_positive(&ktu, iters + 1)?;
        for j in 0..cols {
            v[j] = beta[j] / ktu[j];
        }
        check_finite(&v, iters + 1)?;
        iters += 1;
    };

    let plan = plan_from_scalings(&k, &u, &v);
    Ok((
        plan,
        ScalingState {
            u,
            v,
            iterations_run: iters,
            final_residual: residual,
            log_domain: false,
        },
    ))
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-domain Sinkhorn: the same fixed point computed on scaled potentials
/// `f = ln u`, `g = ln v` with log-sum-exp reductions, absorbing the
/// scaling vectors into the potentials every sweep.
fn sinkhorn_log(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
    v0: &[f64],
) -> Result<(TransportPlan, ScalingState)> {
    let (alpha, beta) = (m.alpha(), m.beta());
    let (np, cols) = (cost.np(), cost.cols());
    // b = -C / epsilon, so log P = f + g + b on the scaled-potential scale.
    let b = cost.values().mapv(|c| -c / cfg.epsilon);
    let ln_alpha: Vec<f64> = alpha.iter().map(|a| ln_or_neg_inf(*a)).collect();
    let ln_beta: Vec<f64> = beta.iter().map(|x| ln_or_neg_inf(*x)).collect();

    let mut f = vec![-(np as f64).ln(); np];
    let mut g: Vec<f64> = v0.iter().map(|x| x.ln()).collect();
    let mut l = vec![0.0; np];
    let mut mm = vec![0.0; cols];
    let mut iters = 0usize;

    let residual = loop {
        for (i, li) in l.iter_mut().enumerate() {
            let row = b.row(i);
            *li = logsumexp((0..cols).map(|j| g[j] + row[j]));
        }
        if iters > 0 {
            let row_res = kahan_sum(
                (0..np).map(|i| ((f[i] + l[i]).exp() - alpha[i]).abs()),
            );
            let col_res = kahan_sum(
                (0..cols).map(|j| ((g[j] + mm[j]).exp() - beta[j]).abs()),
            );
            let res = row_res + col_res;
            if (cfg.residual_tol > 0.0 && res <= cfg.residual_tol) || iters >= cfg.max_iters {
                break res;
            }
        }
        for i in 0..np {
            f[i] = ln_alpha[i] - l[i];
        }
        for j in 0..cols {
            mm[j] = logsumexp((0..np).map(|i| f[i] + b[(i, j)]));
            g[j] = ln_beta[j] - mm[j];
        }
        iters += 1;
    };

    let plan = plan_from_potentials(&b, &f, &g);
    Ok((
        plan,
        ScalingState {
            u: f.iter().map(|x| cfg.epsilon * x).collect(),
            v: g.iter().map(|x| cfg.epsilon * x).collect(),
            iterations_run: iters,
            final_residual: residual,
            log_domain: true,
        },
    ))
}

fn plan_from_potentials(b: &Array2<f64>, f: &[f64], g: &[f64]) -> TransportPlan {
    let (n, m) = b.dim();
    let mut values = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            values[(i, j)] = (f[i] + g[j] + b[(i, j)]).exp();
        }
    }
    TransportPlan::from_array(values).expect("exponentials are nonnegative")
}

/// Expanded objective `<P,C> - eps H(P) + tau1 KL(P1|a) + tau2 KL(1'P|b)`
/// of the current scaling state; the debug-build descent diagnostic for
/// finite constraint strengths.
#[cfg(debug_assertions)]
fn debug_objective(
    k: &Array2<f64>,
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
    u: &[f64],
    v: &[f64],
) -> f64 {
    let (t1, t2) = match (cfg.tau1, cfg.tau2) {
        (Tau::Finite(a), Tau::Finite(b)) => (a, b),
        _ => unreachable!("diagnostic only runs for finite taus"),
    };
    let (n, mm) = k.dim();
    let mut transport = 0.0;
    let mut neg_entropy = 0.0;
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; mm];
    for i in 0..n {
        for j in 0..mm {
            let p = u[i] * k[(i, j)] * v[j];
            transport += p * cost.get(i, j);
            if p > 0.0 {
                neg_entropy += p * (p.ln() - 1.0);
            }
            rows[i] += p;
            cols[j] += p;
        }
    }
    let kl = |p: &[f64], q: &[f64]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(pi, qi)| {
                if *pi > 0.0 {
                    pi * (pi / qi).ln() - pi + qi
                } else {
                    *qi
                }
            })
            .sum()
    };
    // A zero tau drops its constraint entirely; skipping the term avoids
    // 0 * inf against zero-mass reference entries.
    let row_term = if t1 > 0.0 { t1 * kl(&rows, m.alpha()) } else { 0.0 };
    let col_term = if t2 > 0.0 { t2 * kl(&cols, m.beta()) } else { 0.0 };
    transport + cfg.epsilon * neg_entropy + row_term + col_term
}

/// Scaling iterations for unbalanced transport with KL marginal penalties:
/// `u <- (alpha ./ (K v))^(tau1/(tau1+eps))` and the symmetric `v` update.
/// `Tau::Infinite` makes an exponent exactly 1 (hard constraint);
/// `tau = 0` makes it 0 (constraint dropped).
///
/// Stops at `max_iters` sweeps or when the sup-norm change of the scaling
/// state over one sweep drops to `residual_tol` (if nonzero); the
/// closed-form limit cases reach an exact fixed point after two sweeps.
/// Debug builds with two finite taus additionally assert that the
/// objective never increases across sweeps.
pub fn unbalanced_scaling(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, ScalingState)> {
    cfg.validate()?;
    check_dims(cost, m)?;
    if cfg.stabilized {
        return unbalanced_log(cost, m, cfg);
    }

    let (alpha, beta) = (m.alpha(), m.beta());
    let (np, cols) = (cost.np(), cost.cols());
    let k = gibbs_kernel(cost, cfg.epsilon);
    let lambda1 = cfg.tau1.exponent(cfg.epsilon);
    let lambda2 = cfg.tau2.exponent(cfg.epsilon);

    let mut u = vec![1.0 / np as f64; np];
    let mut v = vec![1.0 / cols as f64; cols];
    let mut kv = vec![0.0; np];
    let mut ktu = vec![0.0; cols];
    let mut iters = 0usize;
    let mut residual = f64::INFINITY;
    #[cfg(debug_assertions)]
    let mut last_objective = f64::INFINITY;

    loop {
        if iters > 0 {
            if cfg.residual_tol > 0.0 && residual <= cfg.residual_tol {
                break;
            }
            if iters >= cfg.max_iters {
                break;
            }
        }
        mat_vec(&k, &v, &mut kv);
        check_positive(&kv, iters + 1)?;
        let mut du = 0.0f64;
        for i in 0..np {
            let base = alpha[i] / kv[i];
            let new = if lambda1 == 1.0 {
                base
            } else if lambda1 == 0.0 {
                1.0
            } else {
                base.powf(lambda1)
            };
            du = du.max((new - u[i]).abs());
            u[i] = new;
        }
        check_finite(&u, iters + 1)?;
        mat_t_vec(&k, &u, &mut ktu);
        check_positive(&ktu, iters + 1)?;
        let mut dv = 0.0f64;
        for j in 0..cols {
            let base = beta[j] / ktu[j];
            let new = if lambda2 == 1.0 {
                base
            } else if lambda2 == 0.0 {
                1.0
            } else {
                base.powf(lambda2)
            };
            dv = dv.max((new - v[j]).abs());
            v[j] = new;
        }
        check_finite(&v, iters + 1)?;
        residual = du.max(dv);
        iters += 1;
        #[cfg(debug_assertions)]
        if matches!(cfg.tau1, Tau::Finite(_)) && matches!(cfg.tau2, Tau::Finite(_)) {
            let objective = debug_objective(&k, cost, m, cfg, &u, &v);
            debug_assert!(
                objective <= last_objective + 1e-9,
                "objective rose from {last_objective} to {objective} at sweep {iters}"
            );
            last_objective = objective;
        }
    }

    let plan = plan_from_scalings(&k, &u, &v);
    Ok((
        plan,
        ScalingState {
            u,
            v,
            iterations_run: iters,
            final_residual: residual,
            log_domain: false,
        },
    ))
}

/// Log-domain unbalanced scaling on scaled potentials `f = ln u`,
/// `g = ln v`: `f <- lambda1 (ln alpha - lse_j(g + b))`, symmetric in `g`.
fn unbalanced_log(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, ScalingState)> {
    let (alpha, beta) = (m.alpha(), m.beta());
    let (np, cols) = (cost.np(), cost.cols());
    let b = cost.values().mapv(|c| -c / cfg.epsilon);
    let lambda1 = cfg.tau1.exponent(cfg.epsilon);
    let lambda2 = cfg.tau2.exponent(cfg.epsilon);
    let ln_alpha: Vec<f64> = alpha.iter().map(|a| ln_or_neg_inf(*a)).collect();
    let ln_beta: Vec<f64> = beta.iter().map(|x| ln_or_neg_inf(*x)).collect();

    let mut f = vec![-(np as f64).ln(); np];
    let mut g = vec![-(cols as f64).ln(); cols];
    let mut iters = 0usize;
    let mut residual = f64::INFINITY;

    loop {
        if iters > 0 {
            if cfg.residual_tol > 0.0 && residual <= cfg.residual_tol {
                break;
            }
            if iters >= cfg.max_iters {
                break;
            }
        }
        let mut du = 0.0f64;
        for i in 0..np {
            let row = b.row(i);
            let lse = logsumexp((0..cols).map(|j| g[j] + row[j]));
            let new = if lambda1 == 0.0 {
                0.0
            } else {
                lambda1 * (ln_alpha[i] - lse)
            };
            let delta = (new - f[i]).abs();
            if delta.is_nan() {
                // -inf to -inf transitions count as no change
                if new != f[i] {
                    du = f64::INFINITY;
                }
            } else {
                du = du.max(delta);
            }
            f[i] = new;
        }
        let mut dv = 0.0f64;
        for j in 0..cols {
            let lse = logsumexp((0..np).map(|i| f[i] + b[(i, j)]));
            let new = if lambda2 == 0.0 {
                0.0
            } else {
                lambda2 * (ln_beta[j] - lse)
            };
            let delta = (new - g[j]).abs();
            if delta.is_nan() {
                if new != g[j] {
                    dv = f64::INFINITY;
                }
            } else {
                dv = dv.max(delta);
            }
            g[j] = new;
        }
        residual = du.max(dv);
        iters += 1;
    }

    let plan = plan_from_potentials(&b, &f, &g);
    Ok((
        plan,
        ScalingState {
            u: f.iter().map(|x| cfg.epsilon * x).collect(),
            v: g.iter().map(|x| cfg.epsilon * x).collect(),
            iterations_run: iters,
            final_residual: residual,
            log_domain: true,
        },
    ))
}

/// Which side the closed-form softmax normalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxAxis {
    /// Softmax over the predictions for each ground truth (column-wise);
    /// the tau1 = 0, tau2 = infinity limit.
    OverPredictions,
    /// Softmax over the ground truths for each prediction (row-wise);
    /// the tau1 = infinity, tau2 = 0 limit.
    OverGroundTruths,
}

/// Closed form of the one-sided limits of [`unbalanced_scaling`]: a
/// marginal-weighted softmax of `-C / eps` along the chosen axis. Matches
/// the converged solver output in the corresponding limit.
pub fn softmax_limit(
    cost: &CostMatrix,
    m: &MarginalPair,
    eps: f64,
    axis: SoftmaxAxis,
) -> Result<TransportPlan> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MatchError::InvalidArgument(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    check_dims(cost, m)?;
    let k = gibbs_kernel(cost, eps);
    let (np, cols) = (cost.np(), cost.cols());
    match axis {
        SoftmaxAxis::OverPredictions => {
            let mut colsum = vec![0.0; cols];
            mat_t_vec(&k, &vec![1.0; np], &mut colsum);
            check_positive(&colsum, 1)?;
            let v: Vec<f64> = m
                .beta()
                .iter()
                .zip(&colsum)
                .map(|(b, s)| b / s)
                .collect();
            Ok(plan_from_scalings(&k, &vec![1.0; np], &v))
        }
        SoftmaxAxis::OverGroundTruths => {
            let mut rowsum = vec![0.0; np];
            mat_vec(&k, &vec![1.0; cols], &mut rowsum);
            check_positive(&rowsum, 1)?;
            let u: Vec<f64> = m
                .alpha()
                .iter()
                .zip(&rowsum)
                .map(|(a, s)| a / s)
                .collect();
            Ok(plan_from_scalings(&k, &u, &vec![1.0; cols]))
        }
    }
}

/// The dual-softmax match:
/// `P_ij = exp(-2 C_ij / eps) / (sum_i exp(-C_ij / eps) sum_j exp(-C_ij / eps))`,
/// equal to the elementwise product of the row-wise and column-wise
/// softmaxes of `-C / eps`.
pub fn dual_softmax(cost: &CostMatrix, eps: f64) -> Result<TransportPlan> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MatchError::InvalidArgument(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    let (np, cols) = (cost.np(), cost.cols());
    let k = gibbs_kernel(cost, eps);
    let mut rowsum = vec![0.0; np];
    let mut colsum = vec![0.0; cols];
    mat_vec(&k, &vec![1.0; cols], &mut rowsum);
    mat_t_vec(&k, &vec![1.0; np], &mut colsum);
    check_positive(&rowsum, 1)?;
    check_positive(&colsum, 1)?;
    let mut values = Array2::zeros((np, cols));
    for i in 0..np {
        for j in 0..cols {
            values[(i, j)] =
                (-2.0 * cost.get(i, j) / eps).exp() / (rowsum[i] * colsum[j]);
        }
    }
    TransportPlan::from_array(values)
}

/// One Jacobi sweep of the balanced iteration from the uniform initial
/// duals `u0 = 1/np`, `v0 = 1/cols`: both `u1` and `v1` are computed from
/// the initial state, then `P = diag(u1) K diag(v1)`. Not the converged
/// match; for uniform no-background marginals it equals the dual-softmax
/// normalization without the doubled exponent.
pub fn sinkhorn_one_iteration(
    cost: &CostMatrix,
    m: &MarginalPair,
    eps: f64,
) -> Result<TransportPlan> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MatchError::InvalidArgument(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    check_dims(cost, m)?;
    let (np, cols) = (cost.np(), cost.cols());
    let k = gibbs_kernel(cost, eps);
    let u0 = vec![1.0 / np as f64; np];
    let v0 = vec![1.0 / cols as f64; cols];
    let mut kv = vec![0.0; np];
    let mut ktu = vec![0.0; cols];
    mat_vec(&k, &v0, &mut kv);
    mat_t_vec(&k, &u0, &mut ktu);
    check_positive(&kv, 1)?;
    check_positive(&ktu, 1)?;
    let u1: Vec<f64> = m.alpha().iter().zip(&kv).map(|(a, x)| a / x).collect();
    let v1: Vec<f64> = m.beta().iter().zip(&ktu).map(|(b, x)| b / x).collect();
    Ok(plan_from_scalings(&k, &u1, &v1))
}

/// Dispatches on the constraint flags: both infinite runs [`sinkhorn`],
/// anything else [`unbalanced_scaling`].
pub fn solve(
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
) -> Result<(TransportPlan, ScalingState)> {
    if cfg.tau1.is_infinite() && cfg.tau2.is_infinite() {
        sinkhorn(cost, m, cfg)
    } else {
        unbalanced_scaling(cost, m, cfg)
    }
}

/// Solves independent problems with data parallelism across problems.
/// Per-problem outputs are bitwise identical to sequential [`solve`] calls;
/// failures carry the index of the offending problem.
pub fn solve_batch(
    problems: &[(CostMatrix, MarginalPair)],
    cfg: &SolverConfig,
) -> Result<Vec<(TransportPlan, ScalingState)>> {
    if problems.is_empty() {
        return Err(MatchError::EmptyInput("problem batch"));
    }
    problems
        .par_iter()
        .enumerate()
        .map(|(index, (cost, m))| {
            solve(cost, m, cfg).map_err(|e| MatchError::BatchProblem {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::prop1_marginals;
    use crate::exact::closest_per_prediction;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn random_cost_bg(np: usize, ng: usize, c_bg: f64, seed: u64) -> CostMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::zeros((np, ng + 1));
        for i in 0..np {
            for j in 0..ng {
                values[(i, j)] = rng.random_range(0.0..1.0);
            }
            values[(i, ng)] = c_bg;
        }
        CostMatrix::with_background(values).unwrap()
    }

    #[test]
    fn zero_cost_uniform_marginals_is_uniform_after_one_iteration() {
        let cost = CostMatrix::with_background(Array2::zeros((3, 4))).unwrap();
        let m = MarginalPair::uniform(3, 4).unwrap();
        let cfg = SolverConfig::balanced(0.7).with_residual_tol(1e-12);
        let (plan, state) = sinkhorn(&cost, &m, &cfg).unwrap();
        assert_eq!(state.iterations_run, 1);
        for i in 0..3 {
            for j in 0..4 {
                assert!((plan.get(i, j) - 1.0 / 12.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sinkhorn_rejects_finite_taus() {
        let cost = random_cost_bg(3, 2, 0.8, 0);
        let m = prop1_marginals(3, 2).unwrap();
        let cfg = SolverConfig::unbalanced(0.1, Tau::Finite(1.0), Tau::Infinite);
        assert!(sinkhorn(&cost, &m, &cfg).is_err());
    }

    #[test]
    fn plain_mode_overflows_at_tiny_epsilon() {
        // exp(-0.8 / 1e-6) underflows the whole kernel.
        let cost = random_cost_bg(4, 3, 0.8, 1);
        let m = prop1_marginals(4, 3).unwrap();
        let cfg = SolverConfig::balanced(1e-6);
        match sinkhorn(&cost, &m, &cfg) {
            Err(MatchError::NumericalOverflow { .. }) => {}
            other => panic!("expected overflow, got {other:?}"),
        }
        // The stabilized mode handles the same instance.
        let cfg = cfg.stabilized().with_max_iters(5000).with_residual_tol(1e-9);
        assert!(sinkhorn(&cost, &m, &cfg).is_ok());
    }

    #[test]
    fn softmax_over_predictions_matches_closed_form() {
        // tau1 = 0, tau2 = inf, uniform no-background marginals: the
        // column softmax with the 1/ng factor, converged after one sweep.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut values = Array2::zeros((5, 3));
        for v in values.iter_mut() {
            *v = rng.random_range(0.0..2.0);
        }
        let cost = CostMatrix::without_background(values.clone()).unwrap();
        let m = MarginalPair::uniform(5, 3).unwrap();
        let cfg = SolverConfig::unbalanced(1.0, Tau::Finite(0.0), Tau::Infinite)
            .with_residual_tol(1e-15)
            .with_max_iters(50);
        let (plan, state) = unbalanced_scaling(&cost, &m, &cfg).unwrap();
        assert!(state.iterations_run <= 2, "ran {}", state.iterations_run);
        for j in 0..3 {
            let colsum: f64 = (0..5).map(|i| (-values[(i, j)]).exp()).sum();
            for i in 0..5 {
                let expected = (-values[(i, j)]).exp() / (3.0 * colsum);
                assert!((plan.get(i, j) - expected).abs() < 1e-12);
            }
        }
        // And the closed-form fast path agrees to the last bit in plain mode.
        let closed = softmax_limit(&cost, &m, 1.0, SoftmaxAxis::OverPredictions).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(plan.get(i, j), closed.get(i, j));
            }
        }
    }

    #[test]
    fn softmax_background_weighting() {
        // tau1 = 0, tau2 = inf with background marginals: real columns get
        // factor 1/np, the background column (np - ng)/np.
        let (np, ng) = (5, 2);
        let cost = random_cost_bg(np, ng, 0.8, 9);
        let m = prop1_marginals(np, ng).unwrap();
        let plan = softmax_limit(&cost, &m, 1.0, SoftmaxAxis::OverPredictions).unwrap();
        for j in 0..=ng {
            let colsum: f64 = (0..np).map(|i| (-cost.get(i, j)).exp()).sum();
            let weight = if j < ng {
                1.0 / np as f64
            } else {
                (np - ng) as f64 / np as f64
            };
            for i in 0..np {
                let expected = weight * (-cost.get(i, j)).exp() / colsum;
                assert!((plan.get(i, j) - expected).abs() < 1e-12);
            }
        }
        let sums = plan.col_sums();
        assert!((sums[ng] - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_concentrates_on_the_row_argmin_as_eps_vanishes() {
        // Costs kept below ~0.7 so the plain-mode row sums stay normal
        // at eps = 1e-3; per-row argmax then equals the cost argmin.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut values = Array2::zeros((6, 4));
        for v in values.iter_mut() {
            *v = rng.random_range(0.0..0.5);
        }
        for i in 0..6 {
            values[(i, 3)] = 0.4;
        }
        let cost = CostMatrix::with_background(values).unwrap();
        let m = prop1_marginals(6, 3).unwrap();
        let sharp = softmax_limit(&cost, &m, 1e-3, SoftmaxAxis::OverGroundTruths).unwrap();
        assert_eq!(
            sharp.row_argmax(),
            closest_per_prediction(&cost).row_argmax()
        );
        // A softer eps spreads each row while keeping the same leader.
        let soft = softmax_limit(&cost, &m, 1.0, SoftmaxAxis::OverGroundTruths).unwrap();
        assert_eq!(soft.row_argmax(), sharp.row_argmax());
        let spread = |p: &TransportPlan| {
            (0..4).map(|j| p.get(0, j)).fold(f64::INFINITY, f64::min)
        };
        assert!(spread(&soft) > spread(&sharp));
    }

    #[test]
    fn softmax_zero_cost_no_background_is_uniform() {
        let cost = CostMatrix::without_background(Array2::zeros((2, 2))).unwrap();
        let m = MarginalPair::uniform(2, 2).unwrap();
        let plan = softmax_limit(&cost, &m, 1.0, SoftmaxAxis::OverPredictions).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plan.get(i, j) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dual_softmax_zero_cost() {
        let cost = CostMatrix::without_background(Array2::zeros((2, 2))).unwrap();
        let plan = dual_softmax(&cost, 1.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plan.get(i, j) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dual_softmax_is_product_of_softmaxes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut values = Array2::zeros((3, 3));
        for v in values.iter_mut() {
            *v = rng.random_range(0.0..1.5);
        }
        let cost = CostMatrix::without_background(values.clone()).unwrap();
        let eps = 0.6;
        let plan = dual_softmax(&cost, eps).unwrap();
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| (-values[(i, j)] / eps).exp()).sum();
            for j in 0..3 {
                let col: f64 = (0..3).map(|r| (-values[(r, j)] / eps).exp()).sum();
                let soft_row = (-values[(i, j)] / eps).exp() / row;
                let soft_col = (-values[(i, j)] / eps).exp() / col;
                assert!((plan.get(i, j) - soft_row * soft_col).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_iteration_matches_dual_normalization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut values = Array2::zeros((4, 3));
        for v in values.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let cost = CostMatrix::without_background(values.clone()).unwrap();
        let m = MarginalPair::uniform(4, 3).unwrap();
        let plan = sinkhorn_one_iteration(&cost, &m, 1.0).unwrap();
        for i in 0..4 {
            let row: f64 = (0..3).map(|j| (-values[(i, j)]).exp()).sum();
            for j in 0..3 {
                let col: f64 = (0..4).map(|r| (-values[(r, j)]).exp()).sum();
                let expected = (-values[(i, j)]).exp() / (row * col);
                assert!((plan.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_matches_sequential_bitwise() {
        let problems: Vec<_> = (0..8)
            .map(|s| {
                let np = 4 + (s as usize % 3);
                let ng = s as usize % 4;
                (
                    random_cost_bg(np, ng, 0.8, 100 + s),
                    prop1_marginals(np, ng).unwrap(),
                )
            })
            .collect();
        let cfg = SolverConfig::balanced(0.3).with_max_iters(15);
        let batch = solve_batch(&problems, &cfg).unwrap();
        for ((cost, m), (plan, state)) in problems.iter().zip(&batch) {
            let (p, s) = solve(cost, m, &cfg).unwrap();
            assert_eq!(p.values(), plan.values());
            assert_eq!(s.u, state.u);
            assert_eq!(s.v, state.v);
        }
    }

    #[test]
    fn batch_error_carries_index() {
        let good = (
            random_cost_bg(3, 1, 0.8, 7),
            prop1_marginals(3, 1).unwrap(),
        );
        let bad = (
            random_cost_bg(3, 1, 0.8, 8),
            prop1_marginals(4, 2).unwrap(),
        );
        let cfg = SolverConfig::balanced(0.3);
        match solve_batch(&[good, bad], &cfg) {
            Err(MatchError::BatchProblem { index: 1, .. }) => {}
            other => panic!("expected indexed failure, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_detected() {
        let cost = random_cost_bg(3, 2, 0.8, 2);
        let m = prop1_marginals(4, 2).unwrap();
        let cfg = SolverConfig::balanced(0.2);
        assert!(matches!(
            sinkhorn(&cost, &m, &cfg),
            Err(MatchError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn unbalanced_with_infinite_taus_equals_sinkhorn_bitwise() {
        let cost = random_cost_bg(6, 4, 0.8, 3);
        let m = prop1_marginals(6, 4).unwrap();
        let cfg = SolverConfig::balanced(0.15).with_max_iters(25);
        let (ps, ss) = sinkhorn(&cost, &m, &cfg).unwrap();
        let (pu, su) = unbalanced_scaling(&cost, &m, &cfg).unwrap();
        assert_eq!(ps.values(), pu.values());
        assert_eq!(ss.u, su.u);
        assert_eq!(ss.v, su.v);
        assert_eq!(ss.iterations_run, su.iterations_run);
    }
}
