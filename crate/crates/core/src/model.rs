//! Domain types shared by every other module.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Rows are resources, columns are schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let n_rows = rows.len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Self {
            rows: n_rows,
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for l in 0..cols {
                data.push(f(j, l));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Column `col` as a vector, i.e. `A e_col`.
    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.rows).map(|j| self.get(j, col)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}

/// One arrival: revenues per scheme plus Gaussian consumption per resource and scheme.
///
/// `var_diag` holds only the diagonal of each per-resource covariance. With at most one
/// scheme selected per request, `x' K x` reads a single diagonal entry, so off-diagonal
/// covariance never enters any constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Request<T> {
    pub revenue: Vec<T>,
    pub mean_consumption: Matrix<T>,
    pub var_diag: Matrix<T>,
}

impl<T: Scalar> Request<T> {
    pub fn new(revenue: Vec<T>, mean_consumption: Matrix<T>, var_diag: Matrix<T>) -> Self {
        Self {
            revenue,
            mean_consumption,
            var_diag,
        }
    }

    /// Request without consumption uncertainty.
    pub fn deterministic(revenue: Vec<T>, mean_consumption: Matrix<T>) -> Self {
        let var_diag = Matrix::zeros(mean_consumption.rows(), mean_consumption.cols());
        Self::new(revenue, mean_consumption, var_diag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentMode {
    /// Each request takes one scheme or is rejected.
    #[default]
    OptionalReject,
    /// Each request must take exactly one scheme.
    MustAssign,
}

impl AssignmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignmentMode::OptionalReject => "optional-reject",
            AssignmentMode::MustAssign => "must-assign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optional-reject" => Some(AssignmentMode::OptionalReject),
            "must-assign" => Some(AssignmentMode::MustAssign),
            _ => None,
        }
    }
}

impl fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full offline description of a problem. The online solvers only ever look at
/// `requests[..=t]` when deciding step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    pub m: usize,
    pub k: usize,
    pub capacities: Vec<T>,
    pub confidence: Vec<T>,
    pub requests: Vec<Request<T>>,
    pub assignment_mode: AssignmentMode,
}

impl<T: Scalar> Instance<T> {
    #[inline]
    pub fn n(&self) -> usize {
        self.requests.len()
    }

    pub fn check_decisions(&self, decisions: &[Decision]) -> Result<()> {
        if decisions.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "decision sequence",
                expected: self.n(),
                found: decisions.len(),
            });
        }
        if let Some(d) = decisions.iter().find(|d| d.0 as usize > self.k) {
            return Err(Error::Domain(format!(
                "choice {} exceeds scheme count {}",
                d.0, self.k
            )));
        }
        Ok(())
    }
}

/// Per-step choice: `0` rejects, `l >= 1` selects scheme `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Decision(pub u32);

impl Decision {
    pub const REJECT: Decision = Decision(0);

    /// Decision selecting the zero-based scheme `index`.
    #[inline]
    pub fn scheme(index: usize) -> Self {
        Decision(index as u32 + 1)
    }

    /// Zero-based scheme index, or `None` for a rejection.
    #[inline]
    pub fn scheme_index(self) -> Option<usize> {
        (self.0 as usize).checked_sub(1)
    }

    #[inline]
    pub fn is_reject(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub decisions: Vec<Decision>,
    pub objective: T,
    /// `p_t` for `t = 1..=n`, recorded when the config asks for it.
    pub price_trajectory: Option<Vec<Vec<T>>>,
    pub per_constraint_soc_lhs: Vec<T>,
    /// Smallest correction factor observed across all steps and constraints
    /// (`1` when the correction is disabled).
    pub min_beta: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    RandomUniform,
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub use_beta_correction: bool,
    pub use_capacity_correction: bool,
    /// Multiplies the `1/sqrt(n)` step size.
    pub step_size_scale: f64,
    pub rng_seed: u64,
    pub tie_break: TieBreak,
    pub record_prices: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::opd()
    }
}

impl SolverConfig {
    /// Vanilla online primal-dual on the linearized rows.
    pub fn opd() -> Self {
        Self {
            use_beta_correction: false,
            use_capacity_correction: false,
            step_size_scale: 1.0,
            rng_seed: 0,
            tie_break: TieBreak::RandomUniform,
            record_prices: true,
        }
    }

    /// Both corrections enabled.
    pub fn mopd() -> Self {
        Self {
            use_beta_correction: true,
            use_capacity_correction: true,
            ..Self::opd()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// A single well-formedness breach reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension(&'static str),
    CapacityLength {
        expected: usize,
        found: usize,
    },
    ConfidenceLength {
        expected: usize,
        found: usize,
    },
    NonPositiveCapacity {
        resource: usize,
    },
    ConfidenceOutOfRange {
        resource: usize,
    },
    RevenueLength {
        request: usize,
        found: usize,
    },
    MatrixShape {
        request: usize,
        which: &'static str,
    },
    NegativeVariance {
        request: usize,
        resource: usize,
        scheme: usize,
    },
    NonFinite {
        request: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension(what) => write!(f, "{what} must be at least 1"),
            Violation::CapacityLength { expected, found } => {
                write!(f, "capacities has length {found}, expected {expected}")
            }
            Violation::ConfidenceLength { expected, found } => {
                write!(f, "confidence has length {found}, expected {expected}")
            }
            Violation::NonPositiveCapacity { resource } => {
                write!(f, "capacity must be positive (resource {resource})")
            }
            Violation::ConfidenceOutOfRange { resource } => write!(
                f,
                "confidence must exceed 0.5 and be below 1 (resource {resource})"
            ),
            Violation::RevenueLength { request, found } => {
                write!(f, "request {request}: revenue has length {found}")
            }
            Violation::MatrixShape { request, which } => {
                write!(f, "request {request}: {which} has the wrong shape")
            }
            Violation::NegativeVariance {
                request,
                resource,
                scheme,
            } => write!(
                f,
                "negative variance (request {request}, resource {resource}, scheme {scheme})"
            ),
            Violation::NonFinite { request } => {
                write!(f, "request {request}: non-finite coefficient")
            }
        }
    }
}

/// Returns every invariant breach of `instance`; empty means well-formed.
pub fn validate<T: Scalar>(instance: &Instance<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let (m, k) = (instance.m, instance.k);
    if m == 0 {
        out.push(Violation::EmptyDimension("resource count m"));
    }
    if k == 0 {
        out.push(Violation::EmptyDimension("scheme count k"));
    }
    if instance.requests.is_empty() {
        out.push(Violation::EmptyDimension("request count n"));
    }
    if instance.capacities.len() != m {
        out.push(Violation::CapacityLength {
            expected: m,
            found: instance.capacities.len(),
        });
    }
    if instance.confidence.len() != m {
        out.push(Violation::ConfidenceLength {
            expected: m,
            found: instance.confidence.len(),
        });
    }
    for (j, &b) in instance.capacities.iter().enumerate() {
        if !b.is_finite() || b <= T::zero() {
            out.push(Violation::NonPositiveCapacity { resource: j });
        }
    }
    let half = T::of(0.5);
    for (j, &eta) in instance.confidence.iter().enumerate() {
        if !(eta > half && eta < T::one()) {
            out.push(Violation::ConfidenceOutOfRange { resource: j });
        }
    }
    for (t, req) in instance.requests.iter().enumerate() {
        if req.revenue.len() != k {
            out.push(Violation::RevenueLength {
                request: t,
                found: req.revenue.len(),
            });
        }
        let shape_ok = |mat: &Matrix<T>| mat.rows() == m && mat.cols() == k;
        if !shape_ok(&req.mean_consumption) {
            out.push(Violation::MatrixShape {
                request: t,
                which: "mean_consumption",
            });
        }
        if !shape_ok(&req.var_diag) {
            out.push(Violation::MatrixShape {
                request: t,
                which: "var_diag",
            });
            continue;
        }
        let finite = req.revenue.iter().all(|x| x.is_finite())
            && req.mean_consumption.iter().all(|x| x.is_finite())
            && req.var_diag.iter().all(|x| x.is_finite());
        if !finite {
            out.push(Violation::NonFinite { request: t });
        }
        for j in 0..m {
            for l in 0..k {
                if req.var_diag.get(j, l) < T::zero() {
                    out.push(Violation::NegativeVariance {
                        request: t,
                        resource: j,
                        scheme: l,
                    });
                }
            }
        }
    }
    out
}

/// Total revenue of the chosen schemes.
pub fn objective_of<T: Scalar>(instance: &Instance<T>, decisions: &[Decision]) -> Result<T> {
    instance.check_decisions(decisions)?;
    Ok(instance
        .requests
        .iter()
        .zip(decisions)
        .filter_map(|(req, d)| d.scheme_index().map(|l| req.revenue[l]))
        .sum())
}
