//! Online primal-dual solvers.
//!
//! Every step prices the arriving request's schemes against the current dual
//! vector, takes the best positive reduced cost (or the best one outright when
//! assignment is mandatory), and moves the prices by a projected subgradient
//! step of size `step_size_scale / sqrt(n)`.
//!
//! Two corrections can be switched on independently:
//!
//! * scale factors `beta_tj = sqrt(t-1) sqrt(sum_i x_i' K_ij x_i) / sum_i gamma_ij' x_i`
//!   on the deviation term of each row, computed from the decisions `1..t-1`;
//! * a per-step budget
//!   `d_tj = (b_j - z_j sqrt((t/n) sum_i x_i' K_ij x_i) - sum_i abar_ij' x_i) / (n - t)`
//!   that replaces the static rate `b / n` in the price update.
//!
//! No price update follows the last step, so `d_n` (a division by zero) is never formed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    validate, AssignmentMode, Decision, Instance, Matrix, Request, Solution, SolverConfig, TieBreak,
};
use crate::scalar::Scalar;
use crate::stats::rng_from_seed;
use crate::transform::{ConsumptionTotals, Linearizer};

#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T> {
    pub prices: Vec<T>,
    /// Number of completed steps.
    pub step_index: usize,
    pub mean_spent: Vec<T>,
    pub var_spent: Vec<T>,
    pub gamma_spent: Vec<T>,
    pub adjusted_capacity: Vec<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn new(initial_rate: Vec<T>) -> Self {
        let m = initial_rate.len();
        Self {
            prices: vec![T::zero(); m],
            step_index: 0,
            mean_spent: vec![T::zero(); m],
            var_spent: vec![T::zero(); m],
            gamma_spent: vec![T::zero(); m],
            adjusted_capacity: initial_rate,
        }
    }

    /// Adds the consumption of `scheme` of `request` to the accumulators.
    pub fn record(&mut self, request: &Request<T>, scheme: usize) {
        for j in 0..self.prices.len() {
            let v = request.var_diag.get(j, scheme);
            self.mean_spent[j] += request.mean_consumption.get(j, scheme);
            self.var_spent[j] += v;
            self.gamma_spent[j] += v.sqrt();
        }
    }
}

/// Scale factors for step `t` (1-based) from the accumulators of steps `1..t`.
pub fn beta_factors<T: Scalar>(state: &DualState<T>, t: usize) -> Vec<T> {
    let lag = T::of(t.saturating_sub(1) as f64).sqrt();
    state
        .var_spent
        .iter()
        .zip(&state.gamma_spent)
        .map(|(&var, &gamma)| {
            if t <= 1 || gamma <= T::zero() {
                T::one()
            } else {
                lag * var.sqrt() / gamma
            }
        })
        .collect()
}

/// Per-step budget after step `t` (1-based), for `1 <= t < n`.
pub fn adjusted_capacity<T: Scalar>(
    state: &DualState<T>,
    t: usize,
    capacities: &[T],
    quantiles: &[T],
    n: usize,
) -> Result<Vec<T>> {
    if t == 0 || t >= n {
        return Err(Error::Domain(format!(
            "adjusted capacity needs 1 <= t < n, got t = {t}, n = {n}"
        )));
    }
    let frac = T::of(t as f64 / n as f64);
    let remaining = T::of((n - t) as f64);
    Ok((0..capacities.len())
        .map(|j| {
            let spread = quantiles[j] * (frac * state.var_spent[j]).sqrt();
            (capacities[j] - spread - state.mean_spent[j]) / remaining
        })
        .collect())
}

/// Chooses a scheme for one request. Returns the decision and the best reduced cost `v_t`.
pub fn opd_select<T: Scalar, R: Rng + ?Sized>(
    prices: &[T],
    revenue: &[T],
    rows: &Matrix<T>,
    mode: AssignmentMode,
    tie_break: TieBreak,
    rng: &mut R,
) -> (Decision, T) {
    let k = revenue.len();
    let reduced = |l: usize| {
        let cost: T = prices
            .iter()
            .enumerate()
            .map(|(j, &p)| p * rows.get(j, l))
            .sum();
        revenue[l] - cost
    };
    let scores: Vec<T> = (0..k).map(reduced).collect();
    let best = scores
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    if mode == AssignmentMode::OptionalReject && (best.is_nan() || best <= T::zero()) {
        return (Decision::REJECT, best);
    }
    let winners: Vec<usize> = (0..k).filter(|&l| scores[l] == best).collect();
    let pick = match (tie_break, winners.len()) {
        (_, 1) | (TieBreak::LowestIndex, _) => winners[0],
        (TieBreak::RandomUniform, len) => winners[rng.random_range(0..len)],
    };
    (Decision::scheme(pick), best)
}

/// Projected subgradient step `p <- max(p + step (consumption - rate), 0)`.
pub fn opd_price_update<T: Scalar>(prices: &mut [T], consumption: &[T], rate: &[T], step: T) {
    for ((p, &a), &d) in prices.iter_mut().zip(consumption).zip(rate) {
        *p = (*p + step * (a - d)).max(T::zero());
    }
}

/// `scale / sqrt(n)`.
pub fn step_size<T: Scalar>(n: usize, scale: f64) -> T {
    T::of(scale / (n as f64).sqrt())
}

/// Runs one online pass over `instance`.
pub fn run_solver<T: Scalar>(instance: &Instance<T>, config: &SolverConfig) -> Result<Solution<T>> {
    let violations = validate(instance);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    if config.step_size_scale.is_nan() || config.step_size_scale <= 0.0 {
        return Err(Error::Domain("step_size_scale must be positive".into()));
    }
    let n = instance.n();
    let lin = Linearizer::for_instance(instance)?;
    let mut rng = rng_from_seed(config.rng_seed);
    let n_t = T::of(n as f64);
    let base_rate: Vec<T> = instance.capacities.iter().map(|&b| b / n_t).collect();
    let step = step_size::<T>(n, config.step_size_scale);

    let mut state = DualState::new(base_rate.clone());
    let mut decisions = Vec::with_capacity(n);
    let mut trajectory = config.record_prices.then(|| Vec::with_capacity(n));
    let mut objective = T::zero();
    let mut min_beta = T::one();
    let zero_use = vec![T::zero(); instance.m];

    for (idx, req) in instance.requests.iter().enumerate() {
        let t = idx + 1;
        if let Some(tr) = trajectory.as_mut() {
            tr.push(state.prices.clone());
        }
        let beta = config.use_beta_correction.then(|| beta_factors(&state, t));
        if let Some(b) = &beta {
            min_beta = b.iter().copied().fold(min_beta, T::min);
        }
        let rows = lin.rows(req, beta.as_deref());
        let (decision, _) = opd_select(
            &state.prices,
            &req.revenue,
            &rows,
            instance.assignment_mode,
            config.tie_break,
            &mut rng,
        );
        let used = match decision.scheme_index() {
            Some(l) => {
                state.record(req, l);
                objective += req.revenue[l];
                rows.column(l)
            }
            None => zero_use.clone(),
        };
        decisions.push(decision);
        state.step_index = t;

        if t < n {
            if config.use_capacity_correction {
                state.adjusted_capacity =
                    adjusted_capacity(&state, t, &instance.capacities, lin.quantiles(), n)?;
            }
            opd_price_update(&mut state.prices, &used, &state.adjusted_capacity, step);
        }
    }

    let totals = ConsumptionTotals {
        mean: state.mean_spent,
        var: state.var_spent,
    };
    Ok(Solution {
        decisions,
        objective,
        price_trajectory: trajectory,
        per_constraint_soc_lhs: totals.soc_lhs(lin.quantiles()),
        min_beta,
    })
}

/// The four solver presets compared by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Opd,
    Mopd,
    MopdNoBeta,
    MopdNoCapacity,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Opd,
        Algorithm::Mopd,
        Algorithm::MopdNoBeta,
        Algorithm::MopdNoCapacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Opd => "opd",
            Algorithm::Mopd => "mopd",
            Algorithm::MopdNoBeta => "mopd-nobeta",
            Algorithm::MopdNoCapacity => "mopd-nocap",
        }
    }

    pub fn config(self) -> SolverConfig {
        let mut c = SolverConfig::mopd();
        match self {
            Algorithm::Opd => return SolverConfig::opd(),
            Algorithm::Mopd => {}
            Algorithm::MopdNoBeta => c.use_beta_correction = false,
            Algorithm::MopdNoCapacity => c.use_capacity_correction = false,
        }
        c
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown algorithm '{s}'")))
    }
}
