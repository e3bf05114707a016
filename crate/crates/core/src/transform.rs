//! From the chance constraint to its cone form and then to per-request linear rows.
//!
//! With Gaussian consumption, `P(sum_t a_tj' x_t <= b_j) >= eta_j` is
//!
//! ```text
//! g_j(x) = sum_t abar_tj' x_t + z_j * sqrt(sum_t x_t' K_tj x_t) <= b_j,   z_j = Phi^{-1}(eta_j)
//! ```
//!
//! For one-hot `x_t`, `sqrt(x_t' K_tj x_t) = gamma_tj' x_t` with `gamma = sqrt(diag K)`.
//! Cauchy-Schwarz then gives `sum_t gamma_tj' x_t / sqrt(n) <= sqrt(sum_t x_t' K_tj x_t)`,
//! so replacing the square root by the left side yields a linear relaxation with rows
//!
//! ```text
//! atilde_tj = abar_tj + z_j gamma_tj / sqrt(n)
//! ```

use crate::error::{Error, Result};
use crate::model::{Decision, Instance, Matrix, Request};
use crate::scalar::Scalar;
use crate::stats::std_normal_quantile;

/// Componentwise square root of a variance row.
pub fn gamma_vector<T: Scalar>(var_diag_row: &[T]) -> Result<Vec<T>> {
    var_diag_row
        .iter()
        .map(|&v| {
            if v < T::zero() || v.is_nan() {
                Err(Error::Domain(format!("negative variance {v}")))
            } else {
                Ok(v.sqrt())
            }
        })
        .collect()
}

/// Precomputed `Phi^{-1}(eta_j)` and the `1/sqrt(n)` factor for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearizer<T> {
    quantiles: Vec<T>,
    inv_sqrt_n: T,
}

impl<T: Scalar> Linearizer<T> {
    pub fn new(confidence: &[T], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("horizon n must be at least 1".into()));
        }
        let quantiles = confidence
            .iter()
            .map(|&eta| std_normal_quantile(eta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            quantiles,
            inv_sqrt_n: T::one() / T::of(n as f64).sqrt(),
        })
    }

    pub fn for_instance(instance: &Instance<T>) -> Result<Self> {
        Self::new(&instance.confidence, instance.n())
    }

    /// `Phi^{-1}(eta_j)` per resource.
    #[inline]
    pub fn quantiles(&self) -> &[T] {
        &self.quantiles
    }

    #[inline]
    pub fn inv_sqrt_n(&self) -> T {
        self.inv_sqrt_n
    }

    /// Rows `abar_tj + beta_j z_j gamma_tj / sqrt(n)`. `beta = None` means all ones.
    pub fn rows(&self, request: &Request<T>, beta: Option<&[T]>) -> Matrix<T> {
        let mean = &request.mean_consumption;
        Matrix::from_fn(mean.rows(), mean.cols(), |j, l| {
            let b = beta.map_or(T::one(), |b| b[j]);
            let gamma = request.var_diag.get(j, l).max(T::zero()).sqrt();
            mean.get(j, l) + b * self.quantiles[j] * gamma * self.inv_sqrt_n
        })
    }
}

/// Linearized consumption matrix of one request for horizon `n`.
pub fn linearized_matrix<T: Scalar>(
    request: &Request<T>,
    confidence: &[T],
    n: usize,
) -> Result<Matrix<T>> {
    Ok(Linearizer::new(confidence, n)?.rows(request, None))
}

/// Linearized matrix with per-resource scale factors on the deviation term.
pub fn corrected_matrix<T: Scalar>(
    request: &Request<T>,
    confidence: &[T],
    n: usize,
    beta: &[T],
) -> Result<Matrix<T>> {
    if beta.len() != request.mean_consumption.rows() {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: request.mean_consumption.rows(),
            found: beta.len(),
        });
    }
    Ok(Linearizer::new(confidence, n)?.rows(request, Some(beta)))
}

/// Running sums of chosen means and chosen variances per resource.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionTotals<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> ConsumptionTotals<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            mean: vec![T::zero(); m],
            var: vec![T::zero(); m],
        }
    }

    pub fn add(&mut self, request: &Request<T>, scheme: usize) {
        for j in 0..self.mean.len() {
            self.mean[j] += request.mean_consumption.get(j, scheme);
            self.var[j] += request.var_diag.get(j, scheme);
        }
    }

    pub fn of(instance: &Instance<T>, decisions: &[Decision]) -> Result<Self> {
        instance.check_decisions(decisions)?;
        let mut totals = Self::zeros(instance.m);
        for (req, d) in instance.requests.iter().zip(decisions) {
            if let Some(l) = d.scheme_index() {
                totals.add(req, l);
            }
        }
        Ok(totals)
    }

    /// `sum mean + z sqrt(sum var)` per resource.
    pub fn soc_lhs(&self, quantiles: &[T]) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(quantiles)
            .map(|((&mu, &v), &z)| mu + z * v.max(T::zero()).sqrt())
            .collect()
    }
}

/// Exact cone left-hand sides `g_j(x)`.
pub fn soc_lhs<T: Scalar>(instance: &Instance<T>, decisions: &[Decision]) -> Result<Vec<T>> {
    let lin = Linearizer::for_instance(instance)?;
    Ok(ConsumptionTotals::of(instance, decisions)?.soc_lhs(lin.quantiles()))
}

/// Left-hand sides of the linearized constraints.
pub fn linearized_lhs<T: Scalar>(instance: &Instance<T>, decisions: &[Decision]) -> Result<Vec<T>> {
    instance.check_decisions(decisions)?;
    let lin = Linearizer::for_instance(instance)?;
    let mut out = vec![T::zero(); instance.m];
    for (req, d) in instance.requests.iter().zip(decisions) {
        if let Some(l) = d.scheme_index() {
            let rows = lin.rows(req, None);
            for (j, o) in out.iter_mut().enumerate() {
                *o += rows.get(j, l);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::tests::tiny_instance;
    use crate::model::AssignmentMode;
    use proptest::prelude::*;
    use rand::Rng;

    const Z95: f64 = 1.6448536269514722;

    #[test]
    fn gamma_is_componentwise_sqrt() {
        assert_eq!(gamma_vector(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(
            gamma_vector(&[4.0, 9.0, 0.25]).unwrap(),
            vec![2.0, 3.0, 0.5]
        );
        assert!(gamma_vector(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn single_selection_identity() {
        let row = [0.3, 2.0, 7.5, 0.0];
        let gamma = gamma_vector(&row).unwrap();
        for l in 0..row.len() {
            // x = e_l: x' diag(row) x = row[l], gamma' x = gamma[l]
            let quad: f64 = (0..row.len())
                .map(|i| if i == l { row[i] } else { 0.0 })
                .sum();
            assert!((quad.sqrt() - gamma[l]).abs() <= 1e-12);
        }
    }

    fn unit_request(var: f64) -> Request<f64> {
        Request::new(
            vec![1.0, 1.0],
            Matrix::zeros(2, 2),
            Matrix::from_fn(2, 2, |_, _| var),
        )
    }

    #[test]
    fn zero_variance_rows_are_means() {
        let inst = tiny_instance();
        let mut req = inst.requests[0].clone();
        req.var_diag = Matrix::zeros(2, 2);
        let rows = linearized_matrix(&req, &inst.confidence, 10).unwrap();
        assert_eq!(rows, req.mean_consumption);
    }

    #[test]
    fn unit_gamma_row_value() {
        let rows = linearized_matrix(&unit_request(1.0), &[0.95, 0.95], 4).unwrap();
        for j in 0..2 {
            for l in 0..2 {
                assert!((rows.get(j, l) - Z95 / 2.0).abs() < 1e-12);
                assert!((rows.get(j, l) - 0.8224).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn quadrupled_horizon_halves_deviation_term() {
        let inst = tiny_instance();
        let req = &inst.requests[0];
        let a = linearized_matrix(req, &inst.confidence, 7).unwrap();
        let b = linearized_matrix(req, &inst.confidence, 28).unwrap();
        for j in 0..2 {
            for l in 0..2 {
                let mean = req.mean_consumption.get(j, l);
                let ratio_gap = (b.get(j, l) - mean) - 0.5 * (a.get(j, l) - mean);
                assert!(ratio_gap.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrected_matrix_is_linear_in_beta() {
        let inst = tiny_instance();
        let req = &inst.requests[0];
        let base = linearized_matrix(req, &inst.confidence, 5).unwrap();
        let one = corrected_matrix(req, &inst.confidence, 5, &[1.0, 1.0]).unwrap();
        assert_eq!(base, one);
        let two = corrected_matrix(req, &inst.confidence, 5, &[2.0, 1.0]).unwrap();
        for l in 0..2 {
            let mean = req.mean_consumption.get(0, l);
            let d1 = base.get(0, l) - mean;
            assert!(((two.get(0, l) - mean) - 2.0 * d1).abs() < 1e-12);
            assert!(two.get(0, l) >= base.get(0, l));
            assert_eq!(two.get(1, l), base.get(1, l));
        }
        assert!(corrected_matrix(req, &inst.confidence, 5, &[1.0]).is_err());
    }

    #[test]
    fn lhs_all_reject_is_zero() {
        let inst = tiny_instance();
        let d = vec![Decision::REJECT; inst.n()];
        assert_eq!(soc_lhs(&inst, &d).unwrap(), vec![0.0, 0.0]);
        assert_eq!(linearized_lhs(&inst, &d).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn lhs_single_acceptance() {
        let inst = tiny_instance();
        let d = [Decision::scheme(1), Decision::REJECT];
        let g = soc_lhs(&inst, &d).unwrap();
        let req = &inst.requests[0];
        let z: Vec<f64> = inst
            .confidence
            .iter()
            .map(|&e| std_normal_quantile(e).unwrap())
            .collect();
        for j in 0..2 {
            let expect = req.mean_consumption.get(j, 1) + z[j] * req.var_diag.get(j, 1).sqrt();
            assert!((g[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_lhs_agree() {
        let mut inst = tiny_instance();
        for r in &mut inst.requests {
            r.var_diag = Matrix::zeros(2, 2);
        }
        let d = [Decision(2), Decision(1)];
        assert_eq!(
            soc_lhs(&inst, &d).unwrap(),
            linearized_lhs(&inst, &d).unwrap()
        );
    }

    #[test]
    fn lhs_dimension_mismatch() {
        let inst = tiny_instance();
        assert!(soc_lhs(&inst, &[Decision::REJECT]).is_err());
        assert!(linearized_lhs(&inst, &[]).is_err());
    }

    pub(crate) fn random_instance(
        rng: &mut impl Rng,
        n: usize,
        m: usize,
        k: usize,
    ) -> Instance<f64> {
        let requests = (0..n)
            .map(|_| {
                Request::new(
                    (0..k).map(|_| rng.random::<f64>()).collect(),
                    Matrix::from_fn(m, k, |_, _| 4.0 * rng.random::<f64>()),
                    Matrix::from_fn(m, k, |_, _| rng.random::<f64>().powi(2)),
                )
            })
            .collect();
        Instance {
            m,
            k,
            capacities: (0..m)
                .map(|_| 1.0 + n as f64 * rng.random::<f64>())
                .collect(),
            confidence: (0..m).map(|_| 0.55 + 0.44 * rng.random::<f64>()).collect(),
            requests,
            assignment_mode: AssignmentMode::OptionalReject,
        }
    }

    #[test]
    fn soc_lhs_matches_resummation() {
        let mut rng = crate::stats::rng_from_seed(8);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 8, 2, 2);
            let d: Vec<Decision> = (0..8).map(|_| Decision(rng.random_range(0..3))).collect();
            let g = soc_lhs(&inst, &d).unwrap();
            for j in 0..2 {
                // reverse accumulation order
                let (mut mu, mut var) = (0.0, 0.0);
                for t in (0..8).rev() {
                    if let Some(l) = d[t].scheme_index() {
                        mu += inst.requests[t].mean_consumption.get(j, l);
                        var += inst.requests[t].var_diag.get(j, l);
                    }
                }
                let z = std_normal_quantile(inst.confidence[j]).unwrap();
                assert!((g[j] - (mu + z * var.sqrt())).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn no_counterexample_to_relaxation_direction() {
        let mut rng = crate::stats::rng_from_seed(81);
        for _ in 0..2000 {
            let n = rng.random_range(1..12);
            let inst = random_instance(&mut rng, n, 2, 3);
            let d: Vec<Decision> = (0..n).map(|_| Decision(rng.random_range(0..4))).collect();
            let soc = soc_lhs(&inst, &d).unwrap();
            let lin = linearized_lhs(&inst, &d).unwrap();
            for j in 0..2 {
                assert!(lin[j] <= soc[j] + 1e-12, "{lin:?} > {soc:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn prop_single_selection_identity(v in proptest::collection::vec(0.0f64..100.0, 1..8), l in 0usize..8) {
            let l = l % v.len();
            let gamma = gamma_vector(&v).unwrap();
            prop_assert!((v[l].sqrt() - gamma[l]).abs() <= 1e-12);
        }

        #[test]
        fn prop_accepting_more_never_decreases_soc(seed in any::<u64>(), extra in 0usize..6) {
            let mut rng = crate::stats::rng_from_seed(seed);
            let inst = random_instance(&mut rng, 6, 2, 2);
            let mut d: Vec<Decision> = (0..6).map(|_| Decision(rng.random_range(0..3))).collect();
            let before = soc_lhs(&inst, &d).unwrap();
            if d[extra].is_reject() {
                d[extra] = Decision(1);
                let after = soc_lhs(&inst, &d).unwrap();
                for j in 0..2 {
                    prop_assert!(after[j] >= before[j]);
                }
            }
        }
    }
}
