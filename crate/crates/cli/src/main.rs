use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uotod_cli::{bench, io, sweep, synth, HarnessError};
use uotod_core::{
    assignment_to_plan, build_cost, closest_per_groundtruth, closest_per_prediction,
    count_positives_negatives, dual_softmax, epsilon_rule, hungarian, prop1_marginals, sinkhorn,
    softmax_limit, unbalanced_objective, unbalanced_scaling, CostMatrix, EpsilonConvention,
    MarginalPair, ObjectiveOptions, SoftmaxAxis, SolverConfig, Tau, TransportPlan,
};

/// Prediction-to-ground-truth matching via unbalanced optimal transport.
#[derive(Parser)]
#[command(name = "uotod", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one matching problem and write the plan (or assignment).
    Match(MatchArgs),
    /// Time solvers across problem sizes and write a CSV.
    Bench(BenchArgs),
    /// Sweep one solver parameter over a problem set and write a CSV.
    Sweep(SweepArgs),
    /// Generate a synthetic problem file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Hungarian,
    Sinkhorn,
    Unbalanced,
    #[value(name = "closest-pred")]
    ClosestPred,
    #[value(name = "closest-gt")]
    ClosestGt,
    Softmax,
    #[value(name = "dual-softmax")]
    DualSoftmax,
}

impl SolverKind {
    fn name(&self) -> &'static str {
        match self {
            Self::Hungarian => "hungarian",
            Self::Sinkhorn => "sinkhorn",
            Self::Unbalanced => "unbalanced",
            Self::ClosestPred => "closest-pred",
            Self::ClosestGt => "closest-gt",
            Self::Softmax => "softmax",
            Self::DualSoftmax => "dual-softmax",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StabilizedMode {
    Auto,
    On,
    Off,
}

#[derive(Args)]
struct MatchArgs {
    /// Problem JSON (predictions + ground truth + weights).
    #[arg(long, conflicts_with = "cost")]
    problem: Option<PathBuf>,
    /// Cost CSV: header line, then an np x (ng+1) matrix whose last column
    /// is the background.
    #[arg(long)]
    cost: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: SolverKind,
    /// Regularization; defaults to the size-scaled rule 0.12/(log(2 np)+1).
    #[arg(long)]
    eps: Option<f64>,
    /// Row-constraint strength: a number or "inf".
    #[arg(long, default_value = "inf")]
    tau1: String,
    /// Column-constraint strength: a number or "inf".
    #[arg(long, default_value = "inf")]
    tau2: String,
    /// Scaling iteration budget.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Residual stopping tolerance (0 keeps the fixed iteration count).
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Log-domain stabilization; auto switches it on for eps < 0.05.
    #[arg(long, value_enum, default_value_t = StabilizedMode::Auto)]
    stabilized: StabilizedMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated prediction counts, e.g. 100,300,8732.
    #[arg(long)]
    np: String,
    #[arg(long, default_value_t = 20)]
    ng: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Comma-separated solvers from {hungarian, sinkhorn, unbalanced}.
    #[arg(long, default_value = "hungarian,sinkhorn")]
    solvers: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Which parameter to sweep: tau1, tau2 or eps.
    #[arg(long)]
    param: String,
    /// Comma-separated values; "inf" is accepted for the taus.
    #[arg(long)]
    values: String,
    /// Problem source: a JSON file (array of problems) or "generated".
    #[arg(long, default_value = "generated")]
    problems: String,
    /// Scene count when generating.
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Predictions per generated problem.
    #[arg(long, default_value_t = 64)]
    np: usize,
    /// Coordinate jitter of generated predictions.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of predictions.
    #[arg(long, default_value_t = 100)]
    np: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Cost-weight preset for the emitted problem.
    #[arg(long, default_value = "detr")]
    weights: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_tau(s: &str) -> Result<Tau, HarnessError> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Tau::Infinite);
    }
    s.parse::<f64>()
        .map(Tau::Finite)
        .map_err(|_| HarnessError::Format(format!("bad tau value {s:?} (number or \"inf\")")))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, HarnessError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| HarnessError::Format(format!("bad {what} entry {tok:?}")))
        })
        .collect()
}

fn load_match_input(args: &MatchArgs) -> Result<(CostMatrix, MarginalPair), HarnessError> {
    let cost = match (&args.problem, &args.cost) {
        (Some(path), None) => {
            let problem = io::load_problem(path)?;
            build_cost(&problem.predictions, &problem.ground_truth, &problem.weights)?
        }
        (None, Some(path)) => io::load_cost_csv(path)?,
        _ => {
            return Err(HarnessError::Format(
                "exactly one of --problem or --cost is required".into(),
            ))
        }
    };
    let m = prop1_marginals(cost.np(), cost.ng())?;
    Ok((cost, m))
}

fn run_match(args: MatchArgs) -> Result<(), HarnessError> {
    let (cost, m) = load_match_input(&args)?;
    let (np, ng) = (cost.np(), cost.ng());
    let eps = args
        .eps
        .unwrap_or_else(|| epsilon_rule(np, 0.12, EpsilonConvention::Experiments));
    let tau1 = parse_tau(&args.tau1)?;
    let tau2 = parse_tau(&args.tau2)?;
    let stabilized = match args.stabilized {
        StabilizedMode::Auto => eps < 0.05,
        StabilizedMode::On => true,
        StabilizedMode::Off => false,
    };
    let mut cfg = SolverConfig::unbalanced(eps, tau1, tau2)
        .with_max_iters(args.iters)
        .with_residual_tol(args.tol);
    if stabilized {
        cfg = cfg.stabilized();
    }

    let mut assignment = None;
    let mut iterations = None;
    // The objective is reported under the configuration the solver ran
    // with; exact limit solvers evaluate at eps = 0 and their limit taus.
    let mut report_cfg = cfg;
    let plan: TransportPlan = match args.solver {
        SolverKind::Hungarian => {
            let a = hungarian(&cost)?;
            let plan = assignment_to_plan(&a, np, ng);
            assignment = Some(a);
            report_cfg.epsilon = 0.0;
            report_cfg.tau1 = Tau::Infinite;
            report_cfg.tau2 = Tau::Infinite;
            plan
        }
        SolverKind::Sinkhorn => {
            let (plan, state) = sinkhorn(&cost, &m, &cfg)?;
            iterations = Some(state.iterations_run);
            plan
        }
        SolverKind::Unbalanced => {
            let (plan, state) = unbalanced_scaling(&cost, &m, &cfg)?;
            iterations = Some(state.iterations_run);
            plan
        }
        SolverKind::ClosestPred => {
            report_cfg.epsilon = 0.0;
            report_cfg.tau1 = Tau::Infinite;
            report_cfg.tau2 = Tau::Finite(0.0);
            closest_per_prediction(&cost)
        }
        SolverKind::ClosestGt => {
            report_cfg.epsilon = 0.0;
            report_cfg.tau1 = Tau::Finite(0.0);
            report_cfg.tau2 = Tau::Infinite;
            closest_per_groundtruth(&cost)?
        }
        SolverKind::Softmax => {
            let axis = if tau1.is_zero() {
                SoftmaxAxis::OverPredictions
            } else {
                SoftmaxAxis::OverGroundTruths
            };
            if axis == SoftmaxAxis::OverGroundTruths {
                report_cfg.tau2 = Tau::Finite(0.0);
            } else {
                report_cfg.tau1 = Tau::Finite(0.0);
            }
            softmax_limit(&cost, &m, eps, axis)?
        }
        SolverKind::DualSoftmax => dual_softmax(&cost, eps)?,
    };

    // Hard (infinite-tau) constraints carry no penalty term in the
    // reported breakdown; the residual fields carry their violation.
    let opts = ObjectiveOptions {
        include_entropy: true,
        include_kl_alpha: !report_cfg.tau1.is_infinite(),
        include_kl_beta: !report_cfg.tau2.is_infinite(),
    };
    let objective = unbalanced_objective(&plan, &cost, &m, &report_cfg, &opts)?;
    let rows = plan.row_sums();
    let cols = plan.col_sums();
    let row_residual: f64 = rows
        .iter()
        .zip(m.alpha())
        .map(|(r, a)| (r - a).abs())
        .sum();
    let col_residual: f64 = cols
        .iter()
        .zip(m.beta())
        .map(|(c, b)| (c - b).abs())
        .sum();
    let (n_pos, n_neg) = count_positives_negatives(&plan, np, ng);

    let mut summary = io::Summary {
        solver: args.solver.name().to_string(),
        np,
        ng,
        transport_cost: plan.transport_cost(&cost),
        objective_transport: 0.0,
        objective_entropy: 0.0,
        objective_kl_alpha: 0.0,
        objective_kl_beta: 0.0,
        objective_total: 0.0,
        row_residual,
        col_residual,
        n_pos,
        n_neg,
        iterations_run: iterations,
    };
    summary.set_objective(&objective);

    match (args.format, &assignment) {
        (OutputFormat::Json, Some(a)) => io::write_assignment_json(&args.out, a, &summary)?,
        (OutputFormat::Csv, Some(a)) => io::write_assignment_csv(&args.out, a)?,
        (OutputFormat::Json, None) => io::write_plan_json(&args.out, &plan, &summary)?,
        (OutputFormat::Csv, None) => io::write_plan_csv(&args.out, &plan)?,
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), HarnessError> {
    let np_list: Vec<usize> = parse_list(&args.np, "np")?;
    let solvers: Vec<String> = args
        .solvers
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let records = bench::run_bench(
        &np_list,
        args.ng,
        args.batch,
        args.iters,
        args.repeats,
        &solvers,
        args.seed,
    )?;
    std::fs::write(&args.out, bench::records_to_csv(&records))?;
    for r in &records {
        println!("{}", r.to_csv_row());
    }
    Ok(())
}

fn load_problem_set(args: &SweepArgs) -> Result<Vec<(CostMatrix, MarginalPair)>, HarnessError> {
    if args.problems == "generated" {
        let mut set = Vec::with_capacity(args.count);
        for k in 0..args.count {
            let scene = synth::generate_scene(args.seed + k as u64)?;
            if args.np < scene.gts.len() {
                return Err(HarnessError::Format(format!(
                    "np = {} is below the object count {} of scene {}",
                    args.np,
                    scene.gts.len(),
                    args.seed + k as u64
                )));
            }
            let preds =
                synth::generate_predictions(&scene, args.np, args.noise, args.seed + k as u64);
            let cost = build_cost(&preds, &scene.gts, &uotod_core::CostWeights::detr())?;
            let m = prop1_marginals(cost.np(), cost.ng())?;
            set.push((cost, m));
        }
        Ok(set)
    } else {
        let text = std::fs::read_to_string(&args.problems)?;
        let records: Vec<io::ProblemRecord> = serde_json::from_str(&text)?;
        let mut set = Vec::with_capacity(records.len());
        for record in records {
            let problem = record.into_problem()?;
            let cost = build_cost(&problem.predictions, &problem.ground_truth, &problem.weights)?;
            let m = prop1_marginals(cost.np(), cost.ng())?;
            set.push((cost, m));
        }
        Ok(set)
    }
}

fn run_sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let param: sweep::SweepParam = args.param.parse()?;
    let values: Vec<sweep::SweepValue> = args
        .values
        .split(',')
        .map(|tok| tok.trim().parse())
        .collect::<Result<_, _>>()?;
    let problems = load_problem_set(&args)?;
    let records = sweep::run_sweep(param, &values, &problems, args.iters)?;
    std::fs::write(&args.out, sweep::records_to_csv(&records))?;
    for r in &records {
        println!("{}", r.to_csv_row());
    }
    Ok(())
}

fn run_gen(args: GenArgs) -> Result<(), HarnessError> {
    let scene = synth::generate_scene(args.seed)?;
    if args.np < scene.gts.len() {
        eprintln!(
            "warning: np = {} is below the scene object count {}; some objects get no nearby prediction",
            args.np,
            scene.gts.len()
        );
    }
    let preds = synth::generate_predictions(&scene, args.np, args.noise, args.seed);
    let weights = match args.weights.as_str() {
        "detr" => uotod_core::CostWeights::detr(),
        "ssd" => uotod_core::CostWeights::ssd(),
        other => {
            return Err(HarnessError::Format(format!(
                "unknown weight preset {other:?} (expected detr or ssd)"
            )))
        }
    };
    io::save_problem(
        &args.out,
        &io::Problem {
            predictions: preds,
            ground_truth: scene.gts,
            weights,
        },
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("UOTOD_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid UOTOD_THREADS={value:?}"),
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Match(args) => run_match(args),
        Command::Bench(args) => run_bench(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Gen(args) => run_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
