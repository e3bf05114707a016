//! `chance-opd` command line: generate instances, run solvers, sweep experiments.
//!
//! Exit codes: `0` success, `1` runtime or I/O failure, `2` usage error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::error::Error;
use crate::experiments::{
    fit_sqrt_law, generate_instance, run_sweep, AlgorithmRun, ExperimentSpec, Reference,
    DEFAULT_BASE_SEED, DEFAULT_TRIALS,
};
use crate::format::{
    emit_instance, line_chart_svg, metrics_csv, read_instance, sweep_csv, Axis, Series,
};
use crate::model::{validate, AssignmentMode, Instance, TieBreak};
use crate::oracle::{
    brute_force_offline, dual_upper_bound, evaluate, mc_chance_check, DEFAULT_BOUND_ITERATIONS,
};
use crate::solvers::{run_solver, Algorithm};
use crate::stats::{derive_seed, std_normal_cdf, DistSpec};
use crate::transform::ConsumptionTotals;

#[derive(Debug, Parser)]
#[command(
    name = "chance-opd",
    version,
    about = "Online allocation under Gaussian chance constraints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one synthetic instance.
    Gen(GenArgs),
    /// Run a solver on an instance file and report its metrics.
    Run(RunArgs),
    /// Compute an offline upper bound for an instance file.
    Bound(BoundArgs),
    /// Run every algorithm over a grid of horizons and write CSV and SVG output.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "custom")]
    Custom,
}

/// Experiment family plus overrides for `custom`.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "I")]
    pub experiment: ExperimentArg,
    /// Schemes per request (custom only).
    #[arg(long)]
    pub k: Option<usize>,
    /// Resources (custom only).
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated confidence levels, one per resource or a single value (custom only).
    #[arg(long, value_delimiter = ',')]
    pub confidence: Option<Vec<f64>>,
    /// Comma-separated per-step capacities, one per resource or a single value (custom only).
    #[arg(long, value_delimiter = ',')]
    pub capacity_rate: Option<Vec<f64>>,
    /// e.g. `uniform:0:1`, `chi2:3` (custom only).
    #[arg(long)]
    pub revenue_dist: Option<DistSpec>,
    /// e.g. `scaled-chi2:2/3:4` (custom only).
    #[arg(long)]
    pub mean_dist: Option<DistSpec>,
    /// e.g. `squared-uniform:0:1` (custom only).
    #[arg(long)]
    pub var_dist: Option<DistSpec>,
    /// Every request must take a scheme.
    #[arg(long)]
    pub must_assign: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Number of requests.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Dual,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieBreakArg {
    Random,
    Lowest,
}

fn algorithm_parser() -> impl TypedValueParser<Value = Algorithm> {
    PossibleValuesParser::new(Algorithm::ALL.map(|a| a.name()))
        .map(|s| s.parse::<Algorithm>().expect("restricted to known names"))
}

#[derive(Debug, Args)]
pub struct BoundOpts {
    #[arg(long, value_enum, default_value = "dual")]
    pub bound: BoundArg,
    /// Subgradient iterations for the dual bound.
    #[arg(long, default_value_t = DEFAULT_BOUND_ITERATIONS)]
    pub bound_iterations: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "mopd", value_parser = algorithm_parser())]
    pub algorithm: Algorithm,
    /// Disable the beta correction.
    #[arg(long)]
    pub no_beta: bool,
    /// Disable the adjusted-capacity correction.
    #[arg(long)]
    pub no_capacity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    pub tie_break: TieBreakArg,
    /// Multiplier on the `1/sqrt(n)` step size.
    #[arg(long, default_value_t = 1.0)]
    pub step_scale: f64,
    #[command(flatten)]
    pub bound: BoundOpts,
    /// Also estimate each chance constraint's satisfaction from this many Monte-Carlo trials.
    #[arg(long)]
    pub mc_check: Option<usize>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub bound: BoundOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated, strictly increasing horizons.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    pub base_seed: u64,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',', value_parser = algorithm_parser(),
          default_value = "opd,mopd,mopd-nobeta,mopd-nocap")]
    pub algorithms: Vec<Algorithm>,
    #[command(flatten)]
    pub bound: BoundOpts,
    #[arg(long, default_value = "sweep-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
    File(PathBuf, Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn broadcast(what: &str, values: Vec<f64>, m: usize) -> CliResult<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        len if len == m => Ok(values),
        len => Err(CliError::Usage(format!(
            "--{what} needs 1 or m = {m} values, got {len}"
        ))),
    }
}

impl ExperimentArgs {
    fn spec(&self) -> CliResult<ExperimentSpec> {
        let overrides = self.k.is_some()
            || self.m.is_some()
            || self.confidence.is_some()
            || self.capacity_rate.is_some()
            || self.revenue_dist.is_some()
            || self.mean_dist.is_some()
            || self.var_dist.is_some();
        let mut spec = match self.experiment {
            ExperimentArg::I => ExperimentSpec::experiment_i(),
            ExperimentArg::II => ExperimentSpec::experiment_ii(),
            ExperimentArg::Custom => ExperimentSpec {
                name: crate::experiments::ExperimentName::Custom,
                ..ExperimentSpec::experiment_i()
            },
        };
        if overrides && self.experiment != ExperimentArg::Custom {
            return Err(CliError::Usage(
                "--k, --m, --confidence, --capacity-rate and the --*-dist flags need --experiment custom"
                    .into(),
            ));
        }
        if let Some(k) = self.k {
            spec.k = k;
        }
        if let Some(m) = self.m {
            if m != spec.m && (self.confidence.is_none() || self.capacity_rate.is_none()) {
                return Err(CliError::Usage(
                    "--m requires --confidence and --capacity-rate".into(),
                ));
            }
            spec.m = m;
        }
        if let Some(c) = &self.confidence {
            spec.confidence = broadcast("confidence", c.clone(), spec.m)?;
        }
        if let Some(c) = &self.capacity_rate {
            spec.capacity_rate = broadcast("capacity-rate", c.clone(), spec.m)?;
        }
        if let Some(d) = self.revenue_dist {
            spec.dists.revenue = d;
        }
        if let Some(d) = self.mean_dist {
            spec.dists.mean = d;
        }
        if let Some(d) = self.var_dist {
            spec.dists.variance = d;
        }
        if self.must_assign {
            spec.assignment_mode = AssignmentMode::MustAssign;
        }
        spec.k
            .checked_sub(1)
            .ok_or_else(|| CliError::Usage("--k must be at least 1".into()))?;
        spec.m
            .checked_sub(1)
            .ok_or_else(|| CliError::Usage("--m must be at least 1".into()))?;
        Ok(spec)
    }
}

fn load(path: &Path) -> CliResult<Instance<f64>> {
    let inst: Instance<f64> =
        read_instance(path).map_err(|e| CliError::File(path.to_path_buf(), e))?;
    let violations = validate(&inst);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations).into());
    }
    Ok(inst)
}

fn upper_bound(inst: &Instance<f64>, opts: &BoundOpts, seed: u64) -> CliResult<f64> {
    Ok(match opts.bound {
        BoundArg::Dual => dual_upper_bound(inst, opts.bound_iterations, seed)?.value,
        BoundArg::Brute => brute_force_offline(inst)?.0,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let mut spec = args.experiment.spec()?;
    let n = args.n as usize;
    spec.n_grid = vec![n];
    spec.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let inst: Instance<f64> = generate_instance(&spec, n, args.seed)?;
    emit(&args.out, &emit_instance(&inst))?;
    let summary = format!(
        "n={} m={} k={} mode={}",
        inst.n(),
        inst.m,
        inst.k,
        inst.assignment_mode
    );
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let inst = load(&args.instance)?;
    let mut config = args.algorithm.config().with_seed(args.seed);
    if args.no_beta {
        config.use_beta_correction = false;
    }
    if args.no_capacity {
        config.use_capacity_correction = false;
    }
    config.tie_break = match args.tie_break {
        TieBreakArg::Random => TieBreak::RandomUniform,
        TieBreakArg::Lowest => TieBreak::LowestIndex,
    };
    if !(args.step_scale.is_finite() && args.step_scale > 0.0) {
        return Err(CliError::Usage("--step-scale must be positive".into()));
    }
    config.step_size_scale = args.step_scale;
    config.record_prices = false;
    info!("running {} with {:?}", args.algorithm, config);
    let sol = run_solver(&inst, &config)?;
    let upper = upper_bound(&inst, &args.bound, derive_seed(&[args.seed, 0xB0]))?;
    let report = evaluate(&inst, &sol.decisions, upper)?;
    let accepted = sol.decisions.iter().filter(|d| !d.is_reject()).count();
    let mut extra = vec![
        ("accepted".to_string(), accepted as f64),
        ("min_beta".to_string(), sol.min_beta),
    ];
    if let Some(trials) = args.mc_check {
        if trials == 0 {
            return Err(CliError::Usage("--mc-check needs at least 1 trial".into()));
        }
        let empirical = mc_chance_check(
            &inst,
            &sol.decisions,
            trials,
            derive_seed(&[args.seed, 0x3C]),
        )?;
        let totals = ConsumptionTotals::of(&inst, &sol.decisions)?;
        for (j, p) in empirical.iter().enumerate() {
            let var = totals.var[j];
            let slack = inst.capacities[j] - totals.mean[j];
            let analytic = if var > 0.0 {
                std_normal_cdf(slack / var.sqrt())
            } else if slack >= 0.0 {
                1.0
            } else {
                0.0
            };
            extra.push((format!("mc_satisfaction_{}", j + 1), *p));
            extra.push((format!("analytic_satisfaction_{}", j + 1), analytic));
        }
        extra.push(("mc_trials".to_string(), trials as f64));
    }
    emit(&args.out, &metrics_csv(&report, &extra))
}

fn cmd_bound(args: &BoundArgs) -> CliResult<()> {
    let inst = load(&args.instance)?;
    let value = upper_bound(&inst, &args.bound, args.seed)?;
    println!("upper_bound,{value}");
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let mut spec = args.experiment.spec()?;
    if let Some(grid) = &args.n_grid {
        spec.n_grid = grid.clone();
    }
    spec.trials = args.trials;
    spec.base_seed = args.base_seed;
    spec.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let algorithms: Vec<AlgorithmRun> = args.algorithms.iter().copied().map(Into::into).collect();
    let reference = match args.bound.bound {
        BoundArg::Dual => Reference::DualBound {
            iterations: args.bound.bound_iterations,
        },
        BoundArg::Brute => Reference::BruteForce,
    };
    let result = run_sweep(&spec, &algorithms, reference)?;
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("sweep.csv"), sweep_csv(&result))?;
    let curves = |f: &dyn Fn(&str) -> Vec<(f64, f64)>| -> Vec<Series> {
        result
            .algorithms
            .iter()
            .map(|a| Series {
                name: a.clone(),
                points: f(a),
            })
            .collect()
    };
    let title = format!("experiment {}", result.experiment.as_str());
    let gap_svg = line_chart_svg(
        &format!("{title}: optimality gap"),
        &Axis::log("n"),
        &Axis::log("mean optimality gap"),
        &curves(&|a| result.gap_curve(a)),
    );
    let dev_svg = line_chart_svg(
        &format!("{title}: probability deviation"),
        &Axis::log("n"),
        &Axis::linear("mean probability deviation"),
        &curves(&|a| result.deviation_curve(a)),
    );
    fs::write(args.out_dir.join("gap.svg"), gap_svg)?;
    fs::write(args.out_dir.join("deviation.svg"), dev_svg)?;
    for alg in &result.algorithms {
        match fit_sqrt_law(&result.gap_curve(alg)) {
            Ok(fit) => println!("slope,{alg},{}", fit.slope),
            Err(e) => {
                warn!("no gap slope for {alg}: {e}");
                println!("slope,{alg},nan");
            }
        }
    }
    Ok(())
}

/// Parses `std::env::args` and runs the requested command.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::File(path, e)) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(1)
        }
    }
}
