//! Offline references and evaluation metrics.
//!
//! The exact cone-constrained optimum is computed by exhaustive search for
//! tiny instances. For realistic horizons the reference is the Lagrangian dual
//! of the linearized problem,
//!
//! ```text
//! D(p) = sum_t max(0, max_l (c_tl - p' atilde_t e_l)) + p' b,   p >= 0
//! ```
//!
//! which bounds the cone optimum from above at every `p >= 0`: every point
//! feasible for the cone constraints is feasible for the linearized ones.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate, AssignmentMode, Decision, Instance, Matrix, TieBreak};
use crate::scalar::Scalar;
use crate::solvers::opd_select;
use crate::stats::{derive_seed, rng_from_seed, standard_normal, std_normal_cdf};
use crate::transform::{soc_lhs, ConsumptionTotals, Linearizer};

/// Largest `(k+1)^n` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<T> {
    pub objective: T,
    pub upper_bound: T,
    pub optimality_gap: T,
    pub violation_norm: T,
    pub prob_deviation_mean: T,
    pub prob_deviation_per_constraint: Vec<T>,
    pub competitive_ratio: T,
}

struct Search<'a, T> {
    instance: &'a Instance<T>,
    quantiles: &'a [T],
    prune: bool,
    first_choice: u32,
    mean: Vec<T>,
    var: Vec<T>,
    current: Vec<Decision>,
    best: Option<(T, Vec<Decision>)>,
}

impl<T: Scalar> Search<'_, T> {
    fn feasible(&self) -> bool {
        (0..self.instance.m).all(|j| {
            self.mean[j] + self.quantiles[j] * self.var[j].sqrt() <= self.instance.capacities[j]
        })
    }

    fn visit(&mut self, t: usize, value: T) {
        if t == self.instance.n() {
            if self.feasible() && self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.current.clone()));
            }
            return;
        }
        let req = &self.instance.requests[t];
        for choice in self.first_choice..=self.instance.k as u32 {
            let d = Decision(choice);
            let Some(l) = d.scheme_index() else {
                self.current.push(d);
                self.visit(t + 1, value);
                self.current.pop();
                continue;
            };
            for j in 0..self.instance.m {
                self.mean[j] += req.mean_consumption.get(j, l);
                self.var[j] += req.var_diag.get(j, l);
            }
            let over = self.prune
                && (0..self.instance.m).any(|j| self.mean[j] > self.instance.capacities[j]);
            if !over {
                self.current.push(d);
                self.visit(t + 1, value + req.revenue[l]);
                self.current.pop();
            }
            for j in 0..self.instance.m {
                self.mean[j] -= req.mean_consumption.get(j, l);
                self.var[j] -= req.var_diag.get(j, l);
            }
        }
    }
}

/// Exact optimum of the cone-constrained problem by exhaustive search.
///
/// Partial sequences whose mean consumption alone exceeds a capacity are
/// pruned; this is exact when all means are nonnegative and every quantile is
/// positive, and it is disabled otherwise.
pub fn brute_force_offline<T: Scalar>(instance: &Instance<T>) -> Result<(T, Vec<Decision>)> {
    let size = ((instance.k + 1) as f64).powi(instance.n() as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let lin = Linearizer::for_instance(instance)?;
    let prune = lin.quantiles().iter().all(|&z| z >= T::zero())
        && instance
            .requests
            .iter()
            .all(|r| r.mean_consumption.iter().all(|&a| a >= T::zero()));
    let mut search = Search {
        instance,
        quantiles: lin.quantiles(),
        prune,
        first_choice: match instance.assignment_mode {
            AssignmentMode::OptionalReject => 0,
            AssignmentMode::MustAssign => 1,
        },
        mean: vec![T::zero(); instance.m],
        var: vec![T::zero(); instance.m],
        current: Vec::with_capacity(instance.n()),
        best: None,
    };
    search.visit(0, T::zero());
    search.best.ok_or(Error::NoFeasibleAssignment)
}

/// Lagrangian dual of the linearized problem with its rows precomputed.
pub struct LinearizedDual<'a, T> {
    instance: &'a Instance<T>,
    rows: Vec<Matrix<T>>,
}

impl<'a, T: Scalar> LinearizedDual<'a, T> {
    pub fn new(instance: &'a Instance<T>) -> Result<Self> {
        let lin = Linearizer::for_instance(instance)?;
        let rows = instance
            .requests
            .iter()
            .map(|r| lin.rows(r, None))
            .collect();
        Ok(Self { instance, rows })
    }

    /// `D(p)`.
    pub fn value(&self, prices: &[T]) -> T {
        self.evaluate(prices, None).0
    }

    /// `D(p)` and a subgradient `b - sum_t atilde_t x_t(p)`.
    pub fn evaluate(&self, prices: &[T], rng: Option<&mut crate::stats::SimRng>) -> (T, Vec<T>) {
        let inst = self.instance;
        let mut fallback = rng_from_seed(0);
        let (rng, tie) = match rng {
            Some(r) => (r, TieBreak::RandomUniform),
            None => (&mut fallback, TieBreak::LowestIndex),
        };
        let mut total = T::zero();
        let mut grad = inst.capacities.clone();
        for (req, rows) in inst.requests.iter().zip(&self.rows) {
            let (d, v) = opd_select(prices, &req.revenue, rows, inst.assignment_mode, tie, rng);
            if let Some(l) = d.scheme_index() {
                total += v;
                for (j, g) in grad.iter_mut().enumerate() {
                    *g -= rows.get(j, l);
                }
            }
        }
        let pb: T = prices
            .iter()
            .zip(&inst.capacities)
            .map(|(&p, &b)| p * b)
            .sum();
        (total + pb, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBound<T> {
    /// Lowest dual value visited.
    pub value: T,
    /// Prices at which `value` was attained.
    pub prices: Vec<T>,
    pub iterations: usize,
}

pub const DEFAULT_BOUND_ITERATIONS: usize = 2000;

/// Upper bound on the cone optimum by projected subgradient descent on `D`.
///
/// Starts at `p = 0` and moves along the normalized subgradient with step
/// `D(0) / (||b|| sqrt(s))` at iteration `s`. `seed` drives tie-breaking
/// between equally good schemes when forming subgradients.
pub fn dual_upper_bound<T: Scalar>(
    instance: &Instance<T>,
    iterations: usize,
    seed: u64,
) -> Result<DualBound<T>> {
    let dual = LinearizedDual::new(instance)?;
    let mut rng = rng_from_seed(seed);
    let m = instance.m;
    let mut prices = vec![T::zero(); m];
    let (d0, mut grad) = dual.evaluate(&prices, Some(&mut rng));
    let mut best = DualBound {
        value: d0,
        prices: prices.clone(),
        iterations,
    };
    let b_norm = norm2(&instance.capacities);
    let scale = if b_norm > T::zero() { d0 / b_norm } else { d0 };
    for s in 1..=iterations {
        let g_norm = norm2(&grad);
        if g_norm == T::zero() || scale <= T::zero() {
            break;
        }
        let step = scale / T::of(s as f64).sqrt();
        for (p, &g) in prices.iter_mut().zip(&grad) {
            *p = (*p - step * g / g_norm).max(T::zero());
        }
        let (value, g) = dual.evaluate(&prices, Some(&mut rng));
        grad = g;
        if value < best.value {
            best.value = value;
            best.prices.clone_from(&prices);
        }
    }
    Ok(best)
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `||(g(x) - b)^+||_2` over the cone left-hand sides.
pub fn violation_norm<T: Scalar>(instance: &Instance<T>, decisions: &[Decision]) -> Result<T> {
    let g = soc_lhs(instance, decisions)?;
    Ok(positive_excess_norm(&g, &instance.capacities))
}

fn positive_excess_norm<T: Scalar>(lhs: &[T], capacities: &[T]) -> T {
    lhs.iter()
        .zip(capacities)
        .map(|(&g, &b)| {
            let e = (g - b).max(T::zero());
            e * e
        })
        .sum::<T>()
        .sqrt()
}

/// Shortfall `(eta_j - Phi((b_j - mean_j) / sqrt(var_j)))^+` per constraint and its mean.
///
/// With zero accumulated variance the consumption is a point mass: the
/// shortfall is `0` when the mean fits and `eta_j` otherwise.
pub fn probability_deviation<T: Scalar>(
    instance: &Instance<T>,
    decisions: &[Decision],
) -> Result<(T, Vec<T>)> {
    let totals = ConsumptionTotals::of(instance, decisions)?;
    Ok(deviation_from_totals(instance, &totals))
}

fn deviation_from_totals<T: Scalar>(
    instance: &Instance<T>,
    totals: &ConsumptionTotals<T>,
) -> (T, Vec<T>) {
    let per: Vec<T> = (0..instance.m)
        .map(|j| {
            let (b, eta) = (instance.capacities[j], instance.confidence[j]);
            let (mu, var) = (totals.mean[j], totals.var[j]);
            if var > T::zero() {
                (eta - std_normal_cdf((b - mu) / var.sqrt())).max(T::zero())
            } else if mu <= b {
                T::zero()
            } else {
                eta
            }
        })
        .collect();
    let mean = if per.is_empty() {
        T::zero()
    } else {
        per.iter().copied().sum::<T>() / T::of(per.len() as f64)
    };
    (mean, per)
}

const MC_CHUNK: usize = 2048;

/// Empirical `P(sum_t a_tj' x_t <= b_j)` from `trials` independent Gaussian draws of
/// every accepted coefficient.
///
/// Trials are split into fixed-size chunks seeded from `(seed, chunk index)`, so the
/// result does not depend on the number of worker threads.
pub fn mc_chance_check<T: Scalar>(
    instance: &Instance<T>,
    decisions: &[Decision],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    instance.check_decisions(decisions)?;
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    // (mean, std) of every accepted coefficient, per resource
    let entries: Vec<Vec<(f64, f64)>> = (0..instance.m)
        .map(|j| {
            instance
                .requests
                .iter()
                .zip(decisions)
                .filter_map(|(r, d)| {
                    d.scheme_index().map(|l| {
                        (
                            r.mean_consumption.get(j, l).as_f64(),
                            r.var_diag.get(j, l).as_f64().max(0.0).sqrt(),
                        )
                    })
                })
                .collect()
        })
        .collect();
    let caps: Vec<f64> = instance.capacities.iter().map(|b| b.as_f64()).collect();
    let chunks = trials.div_ceil(MC_CHUNK);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut rng = rng_from_seed(derive_seed(&[seed, c as u64]));
            let mut hits = vec![0usize; caps.len()];
            for _ in 0..count {
                for (j, list) in entries.iter().enumerate() {
                    let total: f64 = list
                        .iter()
                        .map(|&(mu, sd)| mu + sd * standard_normal(&mut rng))
                        .sum();
                    if total <= caps[j] {
                        hits[j] += 1;
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![0usize; caps.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hits.into_iter().map(|h| h as f64 / trials as f64).collect())
}

/// All metrics of one decision sequence against a reference value `upper_bound`.
pub fn evaluate<T: Scalar>(
    instance: &Instance<T>,
    decisions: &[Decision],
    upper_bound: T,
) -> Result<MetricsReport<T>> {
    let violations = validate(instance);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    let objective = crate::model::objective_of(instance, decisions)?;
    let totals = ConsumptionTotals::of(instance, decisions)?;
    let lin = Linearizer::for_instance(instance)?;
    let lhs = totals.soc_lhs(lin.quantiles());
    let (prob_deviation_mean, prob_deviation_per_constraint) =
        deviation_from_totals(instance, &totals);
    Ok(MetricsReport {
        objective,
        upper_bound,
        optimality_gap: upper_bound - objective,
        violation_norm: positive_excess_norm(&lhs, &instance.capacities),
        prob_deviation_mean,
        prob_deviation_per_constraint,
        competitive_ratio: objective / upper_bound,
    })
}
