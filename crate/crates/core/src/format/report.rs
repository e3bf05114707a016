//! CSV output for sweeps and single-run metric reports.
//!
//! Floats use Rust's shortest round-trip formatting, so a value parsed back
//! from the CSV equals the in-memory value bit for bit. Wall clock is left out
//! to keep the files byte-identical across runs.

use std::fmt::Write as _;

use crate::experiments::SweepResult;
use crate::oracle::MetricsReport;
use crate::scalar::Scalar;

pub const SWEEP_CSV_VERSION: u32 = 1;
pub const SWEEP_CSV_HEADER: &str = "schema_version,experiment,n,algorithm,metric,mean,std,trials";

/// One row per `(n, algorithm, metric)` in grid order.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for s in &result.summaries {
        for (metric, v) in s.metrics() {
            let _ = writeln!(
                out,
                "{SWEEP_CSV_VERSION},{},{},{},{metric},{},{},{}",
                result.experiment.as_str(),
                s.n,
                s.algorithm,
                v.mean,
                v.std,
                s.trials
            );
        }
    }
    out
}

/// `metric,value` lines for one evaluated run, followed by `extra` rows.
pub fn metrics_csv<T: Scalar>(report: &MetricsReport<T>, extra: &[(String, f64)]) -> String {
    let mut rows: Vec<(String, f64)> = vec![
        ("objective".into(), report.objective.as_f64()),
        ("upper_bound".into(), report.upper_bound.as_f64()),
        ("optimality_gap".into(), report.optimality_gap.as_f64()),
        ("violation_norm".into(), report.violation_norm.as_f64()),
        (
            "prob_deviation_mean".into(),
            report.prob_deviation_mean.as_f64(),
        ),
    ];
    for (j, d) in report.prob_deviation_per_constraint.iter().enumerate() {
        rows.push((format!("prob_deviation_{}", j + 1), d.as_f64()));
    }
    rows.push((
        "competitive_ratio".into(),
        report.competitive_ratio.as_f64(),
    ));
    rows.extend(extra.iter().cloned());
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_sweep, AlgorithmRun, ExperimentSpec, Reference};
    use crate::solvers::Algorithm;

    #[test]
    fn sweep_csv_values_parse_back_exactly() {
        let mut spec = ExperimentSpec::experiment_i();
        spec.n_grid = vec![10, 20];
        spec.trials = 3;
        let algs: Vec<AlgorithmRun> = [Algorithm::Opd, Algorithm::Mopd].map(Into::into).to_vec();
        let res = run_sweep(&spec, &algs, Reference::DualBound { iterations: 50 }).unwrap();
        let csv = sweep_csv(&res);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        let per_summary = res.summaries[0].metrics().len();
        assert_eq!(rows.len(), res.summaries.len() * per_summary);
        for (i, row) in rows.iter().enumerate() {
            let s = &res.summaries[i / per_summary];
            let (name, v) = &s.metrics()[i % per_summary];
            assert_eq!(row[0], "1");
            assert_eq!(row[1], "I");
            assert_eq!(row[2].parse::<usize>().unwrap(), s.n);
            assert_eq!(row[3], s.algorithm);
            assert_eq!(row[4], name);
            assert_eq!(row[5].parse::<f64>().unwrap().to_bits(), v.mean.to_bits());
            assert_eq!(row[6].parse::<f64>().unwrap().to_bits(), v.std.to_bits());
            assert_eq!(row[7], "3");
        }
    }

    #[test]
    fn metrics_csv_lists_every_constraint() {
        let report = MetricsReport {
            objective: 2.0,
            upper_bound: 3.0,
            optimality_gap: 1.0,
            violation_norm: 0.0,
            prob_deviation_mean: 0.05,
            prob_deviation_per_constraint: vec![0.1, 0.0],
            competitive_ratio: 2.0 / 3.0,
        };
        let csv = metrics_csv(&report, &[("mc_satisfaction_1".into(), 0.5)]);
        let keys: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "metric",
                "objective",
                "upper_bound",
                "optimality_gap",
                "violation_norm",
                "prob_deviation_mean",
                "prob_deviation_1",
                "prob_deviation_2",
                "competitive_ratio",
                "mc_satisfaction_1"
            ]
        );
    }
}
