//! Matching-time benchmark: batched scaling solvers against sequential
//! Hungarian matching over the same problems.
//!
//! Timing wraps the matching call only; cost-matrix construction and I/O
//! are excluded, mirroring a protocol that times the match given the cost.
//! There is no device-transfer term on the Hungarian side here: everything
//! lives in one address space.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uotod_core::{
    epsilon_rule, hungarian, prop1_marginals, solve_batch, CostMatrix, EpsilonConvention,
    MarginalPair, SolverConfig, Tau,
};

use crate::HarnessError;

pub const BACKGROUND_COST: f64 = 0.8;

/// One timed configuration: mean and standard deviation over repeats.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub solver: String,
    pub np: usize,
    pub ng: usize,
    pub batch: usize,
    pub iters: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl BenchRecord {
    pub fn csv_header() -> &'static str {
        "solver,np,ng,batch,iters,mean_ms,std_ms"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.solver, self.np, self.ng, self.batch, self.iters, self.mean_ms, self.std_ms
        )
    }
}

/// Random background-augmented problems of a fixed shape: real costs
/// uniform in `[0, 1)`, constant background column.
pub fn random_problems(
    np: usize,
    ng: usize,
    batch: usize,
    seed: u64,
) -> Vec<(CostMatrix, MarginalPair)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch)
        .map(|_| {
            let mut values = Array2::zeros((np, ng + 1));
            for i in 0..np {
                for j in 0..ng {
                    values[(i, j)] = rng.random_range(0.0..1.0);
                }
                values[(i, ng)] = BACKGROUND_COST;
            }
            (
                CostMatrix::with_background(values).expect("finite random costs"),
                prop1_marginals(np, ng).expect("ng <= np"),
            )
        })
        .collect()
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = if samples.len() > 1 {
        (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn solver_config(solver: &str, np: usize, iters: usize) -> Result<SolverConfig, HarnessError> {
    let eps = epsilon_rule(np, 0.12, EpsilonConvention::Experiments);
    match solver {
        "sinkhorn" => Ok(SolverConfig::balanced(eps).with_max_iters(iters)),
        // Near-hard row constraint, loose column constraint: the working
        // point used for anchor-style matching.
        "unbalanced" => Ok(
            SolverConfig::unbalanced(eps, Tau::Finite(100.0), Tau::Finite(0.01))
                .with_max_iters(iters),
        ),
        other => Err(HarnessError::Format(format!(
            "unknown bench solver {other:?} (expected hungarian, sinkhorn or unbalanced)"
        ))),
    }
}

/// Times each `(solver, np)` pair over `repeats` runs of a batch of
/// freshly generated problems. Scaling solvers run through the batched
/// data-parallel path; `hungarian` runs the batch sequentially.
pub fn run_bench(
    np_list: &[usize],
    ng: usize,
    batch: usize,
    iters: usize,
    repeats: usize,
    solvers: &[String],
    seed: u64,
) -> Result<Vec<BenchRecord>, HarnessError> {
    if np_list.is_empty() || solvers.is_empty() || repeats == 0 || batch == 0 {
        return Err(HarnessError::Format(
            "bench needs nonempty np list, solvers, batch >= 1 and repeats >= 1".into(),
        ));
    }
    let mut records = Vec::new();
    for &np in np_list {
        if ng > np {
            return Err(HarnessError::Format(format!(
                "ng = {ng} exceeds np = {np}"
            )));
        }
        let problems = random_problems(np, ng, batch, seed ^ np as u64);
        for solver in solvers {
            let mut samples = Vec::with_capacity(repeats);
            if solver == "hungarian" {
                for _ in 0..repeats {
                    let t = Instant::now();
                    for (cost, _) in &problems {
                        std::hint::black_box(hungarian(cost)?);
                    }
                    samples.push(t.elapsed().as_secs_f64() * 1e3);
                }
            } else {
                let cfg = solver_config(solver, np, iters)?;
                for _ in 0..repeats {
                    let t = Instant::now();
                    std::hint::black_box(solve_batch(&problems, &cfg)?);
                    samples.push(t.elapsed().as_secs_f64() * 1e3);
                }
            }
            let (mean_ms, std_ms) = mean_std(&samples);
            records.push(BenchRecord {
                solver: solver.clone(),
                np,
                ng,
                batch,
                iters,
                mean_ms,
                std_ms,
            });
        }
    }
    Ok(records)
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(BenchRecord::csv_header());
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}
