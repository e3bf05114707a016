use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chance-opd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in report:\n{report}"))
        .parse()
        .unwrap()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let mut full = vec!["gen", "--out", &p];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    p
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(
        dir.path(),
        "a.inst",
        &["--n", "30", "--seed", "9", "--experiment", "II"],
    );
    let b = gen(
        dir.path(),
        "b.inst",
        &["--n", "30", "--seed", "9", "--experiment", "II"],
    );
    let c = gen(
        dir.path(),
        "c.inst",
        &["--n", "30", "--seed", "10", "--experiment", "II"],
    );
    let read = |p: &str| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn gen_prints_a_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.inst");
    let out = run(&[
        "gen",
        "--n",
        "12",
        "--must-assign",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "n=12 m=4 k=5 mode=must-assign");
}

#[test]
fn gen_to_stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "a.inst", &["--n", "7"]);
    let out = run(&["gen", "--n", "7"]);
    assert_eq!(out.stdout, std::fs::read(p).unwrap());
}

#[test]
fn zero_horizon_is_a_usage_error() {
    let out = run(&["gen", "--n", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(run(&["gen", "--n", "5", "--k", "3"]).status.code(), Some(2));
    assert_eq!(
        run(&[
            "gen",
            "--n",
            "5",
            "--experiment",
            "custom",
            "--mean-dist",
            "gauss:1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_or_malformed_files_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--instance", "/definitely/not/here.inst"]);
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.inst");
    std::fs::write(&bad, "chance-opd-instance 7\n").unwrap();
    let out = run(&["run", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1") && err.contains("version"), "{err}");
}

#[test]
fn opd_equals_mopd_without_corrections() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "i.inst", &["--n", "150", "--seed", "3"]);
    let a = run(&["run", "--instance", &p, "--algorithm", "opd", "--seed", "4"]);
    let b = run(&[
        "run",
        "--instance",
        &p,
        "--algorithm",
        "mopd",
        "--no-beta",
        "--no-capacity",
        "--seed",
        "4",
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&[
        "run",
        "--instance",
        &p,
        "--algorithm",
        "mopd",
        "--seed",
        "4",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn brute_force_gap_is_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2", "3", "4"] {
        let p = gen(
            dir.path(),
            &format!("s{seed}.inst"),
            &[
                "--n",
                "6",
                "--seed",
                seed,
                "--experiment",
                "custom",
                "--k",
                "2",
                "--m",
                "2",
                "--confidence",
                "0.7,0.9",
                "--capacity-rate",
                "1",
            ],
        );
        for alg in ["opd", "mopd"] {
            let out = run(&[
                "run",
                "--instance",
                &p,
                "--algorithm",
                alg,
                "--bound",
                "brute",
            ]);
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            let report = stdout(&out);
            // the online solution may breach the cone, so only a feasible one is bounded
            if report_value(&report, "violation_norm") == 0.0 {
                assert!(
                    report_value(&report, "optimality_gap") >= -1e-12,
                    "{report}"
                );
            }
        }
    }
}

#[test]
fn brute_force_refuses_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "big.inst", &["--n", "40"]);
    let out = run(&["run", "--instance", &p, "--bound", "brute"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("limit"));
}

#[test]
fn mc_check_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "mc.inst", &["--n", "400", "--seed", "8"]);
    let trials = 40_000;
    let out = run(&["run", "--instance", &p, "--mc-check", &trials.to_string()]);
    assert!(out.status.success());
    let report = stdout(&out);
    for j in 1..=4 {
        let emp = report_value(&report, &format!("mc_satisfaction_{j}"));
        let exact = report_value(&report, &format!("analytic_satisfaction_{j}"));
        let sigma = (exact * (1.0 - exact) / trials as f64)
            .sqrt()
            .max(1.0 / trials as f64);
        assert!(
            (emp - exact).abs() <= 3.0 * sigma + 1e-12,
            "j={j}: {emp} vs {exact}"
        );
    }
}

#[test]
fn bound_command_matches_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let small = gen(
        dir.path(),
        "small.inst",
        &[
            "--n",
            "5",
            "--experiment",
            "custom",
            "--k",
            "2",
            "--m",
            "1",
            "--confidence",
            "0.8",
            "--capacity-rate",
            "1",
        ],
    );
    let bound = stdout(&run(&["bound", "--instance", &small, "--bound", "brute"]));
    let report = stdout(&run(&["run", "--instance", &small, "--bound", "brute"]));
    let b: f64 = bound
        .trim()
        .strip_prefix("upper_bound,")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(b, report_value(&report, "upper_bound"));
}

#[test]
fn sweep_writes_csv_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let args = [
        "sweep",
        "--n-grid",
        "20,40,80",
        "--trials",
        "2",
        "--bound-iterations",
        "50",
        "--algorithms",
        "opd,mopd",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("slope,opd,") && lines[1].starts_with("slope,mopd,"));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    for f in ["gap.svg", "deviation.svg"] {
        let svg = std::fs::read_to_string(out_dir.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("mopd"));
    }
    let again = run(&args);
    assert_eq!(again.stdout, out.stdout);
    assert_eq!(
        std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap(),
        csv
    );
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(workers);
        let out = bin()
            .env("CHANCE_OPD_WORKERS", workers)
            .args([
                "sweep",
                "--experiment",
                "II",
                "--n-grid",
                "16,32,64",
                "--trials",
                "3",
                "--bound-iterations",
                "40",
                "--out-dir",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        csvs.push(std::fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn sweep_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--n-grid",
        "10,20,40",
        "--trials",
        "2",
        "--bound-iterations",
        "100",
        "--algorithms",
        "opd,mopd",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let got = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let want = include_str!("golden/sweep_small.csv");
    assert_eq!(got, want);
}

#[test]
fn gen_matches_golden_instance() {
    let out = run(&["gen", "--experiment", "II", "--n", "3", "--seed", "5"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        include_str!("golden/exp2_n3_seed5.inst")
    );
}

#[test]
fn shipped_example_runs() {
    let p = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/real_shaped.inst");
    let out = run(&["run", "--instance", p, "--mc-check", "2000"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = stdout(&out);
    assert_eq!(report_value(&report, "accepted"), 200.0);
}
