//! Parameter sweeps: solve a problem set across a range of one solver
//! parameter and aggregate match statistics per value.

use uotod_core::{
    entropy, epsilon_rule, solve, CostMatrix, EpsilonConvention, MarginalPair, SolverConfig, Tau,
};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Tau1,
    Tau2,
    Eps,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau1" => Ok(Self::Tau1),
            "tau2" => Ok(Self::Tau2),
            "eps" => Ok(Self::Eps),
            other => Err(HarnessError::Format(format!(
                "unknown sweep parameter {other:?} (expected tau1, tau2 or eps)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Tau1 => "tau1",
            Self::Tau2 => "tau2",
            Self::Eps => "eps",
        };
        f.write_str(s)
    }
}

/// A sweep value: a finite number or the infinity flag (for tau sweeps).
#[derive(Debug, Clone, Copy)]
pub enum SweepValue {
    Finite(f64),
    Infinite,
}

impl std::str::FromStr for SweepValue {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Self::Infinite);
        }
        s.parse::<f64>()
            .map(Self::Finite)
            .map_err(|_| HarnessError::Format(format!("bad sweep value {s:?}")))
    }
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(x) => write!(f, "{x}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

/// Aggregate match statistics at one parameter value, averaged over the
/// problem set.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub param: SweepParam,
    pub value: SweepValue,
    pub background_mass_fraction: f64,
    pub mean_multiplicity: f64,
    pub mean_entropy: f64,
    pub mean_transport_cost: f64,
}

impl SweepRecord {
    pub fn csv_header() -> &'static str {
        "param,value,bg_mass_fraction,mean_multiplicity,mean_entropy,mean_transport_cost"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.param,
            self.value,
            self.background_mass_fraction,
            self.mean_multiplicity,
            self.mean_entropy,
            self.mean_transport_cost
        )
    }
}

/// Mean over ground-truth columns of `np` times the column mass carried by
/// the rows whose argmax points at that column: roughly how many
/// predictions each object attracts.
fn mean_multiplicity(plan: &uotod_core::TransportPlan, ng: usize) -> f64 {
    if ng == 0 {
        return 0.0;
    }
    let np = plan.np();
    let argmax = plan.row_argmax();
    let mut total = 0.0;
    for j in 0..ng {
        let mass: f64 = (0..np)
            .filter(|i| argmax[*i] == j)
            .map(|i| plan.get(i, j))
            .sum();
        total += np as f64 * mass;
    }
    total / ng as f64
}

/// Solves every problem at each sweep value and aggregates the statistics.
/// The base configuration is balanced at the size-scaled epsilon; the swept
/// parameter overrides its slot. Runs stabilized so small epsilons stay
/// finite.
pub fn run_sweep(
    param: SweepParam,
    values: &[SweepValue],
    problems: &[(CostMatrix, MarginalPair)],
    iters: usize,
) -> Result<Vec<SweepRecord>, HarnessError> {
    if values.is_empty() || problems.is_empty() {
        return Err(HarnessError::Format(
            "sweep needs at least one value and one problem".into(),
        ));
    }
    let mut records = Vec::with_capacity(values.len());
    for value in values {
        let mut bg_fraction = 0.0;
        let mut multiplicity = 0.0;
        let mut ent = 0.0;
        let mut cost_total = 0.0;
        for (cost, m) in problems {
            let eps = epsilon_rule(cost.np(), 0.12, EpsilonConvention::Experiments);
            let mut cfg = SolverConfig::balanced(eps)
                .with_max_iters(iters)
                .with_residual_tol(1e-9)
                .stabilized();
            match (param, value) {
                (SweepParam::Tau1, SweepValue::Finite(t)) => cfg.tau1 = Tau::Finite(*t),
                (SweepParam::Tau1, SweepValue::Infinite) => cfg.tau1 = Tau::Infinite,
                (SweepParam::Tau2, SweepValue::Finite(t)) => cfg.tau2 = Tau::Finite(*t),
                (SweepParam::Tau2, SweepValue::Infinite) => cfg.tau2 = Tau::Infinite,
                (SweepParam::Eps, SweepValue::Finite(e)) => cfg.epsilon = *e,
                (SweepParam::Eps, SweepValue::Infinite) => {
                    return Err(HarnessError::Format("eps cannot be infinite".into()))
                }
            }
            let (plan, _) = solve(cost, m, &cfg)?;
            let total_mass = plan.total_mass();
            let bg_col = cost.cols() - 1;
            let bg_mass: f64 = (0..plan.np()).map(|i| plan.get(i, bg_col)).sum();
            bg_fraction += if total_mass > 0.0 {
                bg_mass / total_mass
            } else {
                0.0
            };
            multiplicity += mean_multiplicity(&plan, cost.ng());
            ent += entropy(&plan);
            cost_total += plan.transport_cost(cost);
        }
        let n = problems.len() as f64;
        records.push(SweepRecord {
            param,
            value: *value,
            background_mass_fraction: bg_fraction / n,
            mean_multiplicity: multiplicity / n,
            mean_entropy: ent / n,
            mean_transport_cost: cost_total / n,
        });
    }
    Ok(records)
}

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SweepRecord::csv_header());
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}
