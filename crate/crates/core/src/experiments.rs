//! Synthetic instance generation and trial sweeps over the horizon `n`.

use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AssignmentMode, Instance, Matrix, Request, SolverConfig};
use crate::oracle::{brute_force_offline, dual_upper_bound, evaluate, MetricsReport};
use crate::scalar::Scalar;
use crate::solvers::{run_solver, Algorithm};
use crate::stats::{derive_seed, rng_from_seed, sample, DistSpec};

/// Environment variable holding the worker-pool size for sweeps.
pub const WORKERS_ENV: &str = "CHANCE_OPD_WORKERS";

pub const DEFAULT_N_GRID: [usize; 6] = [100, 200, 400, 800, 1600, 3200];
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_BASE_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    ExperimentI,
    ExperimentII,
    Custom,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::ExperimentI => "I",
            ExperimentName::ExperimentII => "II",
            ExperimentName::Custom => "custom",
        }
    }
}

/// Distributions of revenues, consumption means and consumption variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distributions {
    pub revenue: DistSpec,
    pub mean: DistSpec,
    pub variance: DistSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub k: usize,
    pub m: usize,
    pub confidence: Vec<f64>,
    /// Per-step capacity `d`; horizon `n` gets `b = n d`.
    pub capacity_rate: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub dists: Distributions,
    pub assignment_mode: AssignmentMode,
}

impl ExperimentSpec {
    /// Bounded setting: `c ~ U[0,1]`, `abar ~ U[0,4]`, variance `~ U[0,1]^2`, `d = 1`.
    pub fn experiment_i() -> Self {
        Self {
            name: ExperimentName::ExperimentI,
            k: 5,
            m: 4,
            confidence: vec![0.65, 0.75, 0.85, 0.95],
            capacity_rate: vec![1.0; 4],
            n_grid: DEFAULT_N_GRID.to_vec(),
            trials: DEFAULT_TRIALS,
            base_seed: DEFAULT_BASE_SEED,
            dists: Distributions {
                revenue: DistSpec::Uniform { lo: 0.0, hi: 1.0 },
                mean: DistSpec::Uniform { lo: 0.0, hi: 4.0 },
                variance: DistSpec::SquaredUniform { lo: 0.0, hi: 1.0 },
            },
            assignment_mode: AssignmentMode::OptionalReject,
        }
    }

    /// Unbounded setting: `c ~ chi2(3)`, `abar ~ (2/3) chi2(4)`,
    /// variance `~ ((2/3) chi2(2))^2`, `d = 1`.
    pub fn experiment_ii() -> Self {
        Self {
            name: ExperimentName::ExperimentII,
            dists: Distributions {
                revenue: DistSpec::ChiSquare { dof: 3 },
                mean: DistSpec::ScaledChiSquare {
                    scale: 2.0 / 3.0,
                    dof: 4,
                },
                variance: DistSpec::SquaredScaledChiSquare {
                    scale: 2.0 / 3.0,
                    dof: 2,
                },
            },
            ..Self::experiment_i()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.k == 0 || self.m == 0 {
            return bad("k and m must be at least 1".into());
        }
        if self.confidence.len() != self.m || self.capacity_rate.len() != self.m {
            return bad(format!(
                "confidence and capacity_rate need length m = {}",
                self.m
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid needs positive horizons".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing".into());
        }
        self.dists.revenue.check()?;
        self.dists.mean.check()?;
        self.dists.variance.check()?;
        Ok(())
    }
}

/// Seed of trial `trial` at horizon `n`: `derive_seed(&[base_seed, n, trial])`.
pub fn trial_seed(base_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(&[base_seed, n as u64, trial as u64])
}

/// Draws an instance with horizon `n`.
///
/// Draw order: for each request, the `k` revenues, then the `m x k` means
/// row by row, then the `m x k` variances row by row.
pub fn generate_instance<T: Scalar>(
    spec: &ExperimentSpec,
    n: usize,
    seed: u64,
) -> Result<Instance<T>> {
    spec.check()?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let (m, k) = (spec.m, spec.k);
    let requests = (0..n)
        .map(|_| {
            let revenue = (0..k)
                .map(|_| T::of(sample(&spec.dists.revenue, &mut rng)))
                .collect();
            let mean = Matrix::from_fn(m, k, |_, _| T::of(sample(&spec.dists.mean, &mut rng)));
            let var = Matrix::from_fn(m, k, |_, _| T::of(sample(&spec.dists.variance, &mut rng)));
            Request::new(revenue, mean, var)
        })
        .collect();
    Ok(Instance {
        m,
        k,
        capacities: spec
            .capacity_rate
            .iter()
            .map(|&d| T::of(d * n as f64))
            .collect(),
        confidence: spec.confidence.iter().map(|&e| T::of(e)).collect(),
        requests,
        assignment_mode: spec.assignment_mode,
    })
}

/// A named solver configuration taking part in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub name: String,
    pub config: SolverConfig,
}

impl From<Algorithm> for AlgorithmRun {
    fn from(a: Algorithm) -> Self {
        Self {
            name: a.name().to_string(),
            config: a.config(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    DualBound { iterations: usize },
    BruteForce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub algorithm: String,
    pub metrics: MetricsReport<f64>,
    pub min_beta: f64,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub algorithm: String,
    pub trials: usize,
    pub objective: MeanStd,
    pub upper_bound: MeanStd,
    pub optimality_gap: MeanStd,
    pub violation_norm: MeanStd,
    pub prob_deviation_mean: MeanStd,
    pub prob_deviation_per_constraint: Vec<MeanStd>,
    pub competitive_ratio: MeanStd,
}

impl Summary {
    /// Named metric columns in their stable reporting order.
    pub fn metrics(&self) -> Vec<(String, MeanStd)> {
        let mut out = vec![
            ("objective".to_string(), self.objective),
            ("upper_bound".to_string(), self.upper_bound),
            ("optimality_gap".to_string(), self.optimality_gap),
            ("violation_norm".to_string(), self.violation_norm),
            ("prob_deviation_mean".to_string(), self.prob_deviation_mean),
        ];
        for (j, d) in self.prob_deviation_per_constraint.iter().enumerate() {
            out.push((format!("prob_deviation_{}", j + 1), *d));
        }
        out.push(("competitive_ratio".to_string(), self.competitive_ratio));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: ExperimentName,
    pub n_grid: Vec<usize>,
    pub algorithms: Vec<String>,
    /// Ordered by `(n, trial, algorithm position)`.
    pub records: Vec<TrialRecord>,
    /// Ordered by `(n, algorithm position)`.
    pub summaries: Vec<Summary>,
}

impl SweepResult {
    pub fn summary(&self, n: usize, algorithm: &str) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.n == n && s.algorithm == algorithm)
    }

    /// `(n, mean gap)` points of one algorithm.
    pub fn gap_curve(&self, algorithm: &str) -> Vec<(f64, f64)> {
        self.summaries
            .iter()
            .filter(|s| s.algorithm == algorithm)
            .map(|s| (s.n as f64, s.optimality_gap.mean))
            .collect()
    }

    /// `(n, mean probability deviation)` points of one algorithm.
    pub fn deviation_curve(&self, algorithm: &str) -> Vec<(f64, f64)> {
        self.summaries
            .iter()
            .filter(|s| s.algorithm == algorithm)
            .map(|s| (s.n as f64, s.prob_deviation_mean.mean))
            .collect()
    }
}

pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn run_trial(
    spec: &ExperimentSpec,
    algorithms: &[AlgorithmRun],
    reference: Reference,
    n: usize,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(spec.base_seed, n, trial);
    let instance: Instance<f64> = generate_instance(spec, n, seed)?;
    let upper = match reference {
        Reference::DualBound { iterations } => {
            dual_upper_bound(&instance, iterations, derive_seed(&[seed, 0xB0]))?.value
        }
        Reference::BruteForce => brute_force_offline(&instance)?.0,
    };
    algorithms
        .iter()
        .map(|alg| {
            let mut config = alg.config.clone();
            config.rng_seed = derive_seed(&[seed, alg.config.rng_seed]);
            config.record_prices = false;
            let start = Instant::now();
            let sol = run_solver(&instance, &config)?;
            let wall_clock = start.elapsed();
            let metrics = evaluate(&instance, &sol.decisions, upper)?;
            Ok(TrialRecord {
                n,
                trial,
                seed,
                algorithm: alg.name.clone(),
                metrics,
                min_beta: sol.min_beta,
                wall_clock,
            })
        })
        .collect()
}

/// Runs every algorithm on `spec.trials` fresh instances per horizon and aggregates.
///
/// All algorithms on one instance share a single reference value. Jobs run on a
/// pool of [`workers_from_env`] threads; the result does not depend on the pool size.
pub fn run_sweep(
    spec: &ExperimentSpec,
    algorithms: &[AlgorithmRun],
    reference: Reference,
) -> Result<SweepResult> {
    spec.check()?;
    if algorithms.is_empty() {
        return Err(Error::Domain("no algorithms given".into()));
    }
    let jobs: Vec<(usize, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers_from_env())
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let per_job: Vec<Result<Vec<TrialRecord>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, t)| run_trial(spec, algorithms, reference, n, t))
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len() * algorithms.len());
    for r in per_job {
        records.extend(r?);
    }
    let summaries = summarize(spec, algorithms, &records);
    Ok(SweepResult {
        experiment: spec.name,
        n_grid: spec.n_grid.clone(),
        algorithms: algorithms.iter().map(|a| a.name.clone()).collect(),
        records,
        summaries,
    })
}

/// Aggregates per-trial records into per `(n, algorithm)` summaries.
pub fn summarize(
    spec: &ExperimentSpec,
    algorithms: &[AlgorithmRun],
    records: &[TrialRecord],
) -> Vec<Summary> {
    let mut out = Vec::new();
    for &n in &spec.n_grid {
        for alg in algorithms {
            let rs: Vec<&MetricsReport<f64>> = records
                .iter()
                .filter(|r| r.n == n && r.algorithm == alg.name)
                .map(|r| &r.metrics)
                .collect();
            let col = |f: &dyn Fn(&MetricsReport<f64>) -> f64| {
                MeanStd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            out.push(Summary {
                n,
                algorithm: alg.name.clone(),
                trials: rs.len(),
                objective: col(&|r| r.objective),
                upper_bound: col(&|r| r.upper_bound),
                optimality_gap: col(&|r| r.optimality_gap),
                violation_norm: col(&|r| r.violation_norm),
                prob_deviation_mean: col(&|r| r.prob_deviation_mean),
                prob_deviation_per_constraint: (0..spec.m)
                    .map(|j| col(&|r| r.prob_deviation_per_constraint[j]))
                    .collect(),
                competitive_ratio: col(&|r| r.competitive_ratio),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Indices of input points dropped for a nonpositive coordinate.
    pub dropped: Vec<usize>,
}

/// Least-squares line through `(ln n, ln gap)`.
pub fn fit_sqrt_law(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let mut dropped = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &(n, gap)) in points.iter().enumerate() {
        if n > 0.0 && gap > 0.0 && n.is_finite() && gap.is_finite() {
            xs.push(n.ln());
            ys.push(gap.ln());
        } else {
            warn!("dropping point {i} (n = {n}, gap = {gap}) from the log-log fit");
            dropped.push(i);
        }
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 positive points, have {}",
            xs.len()
        )));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all horizons are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        dropped,
    })
}
