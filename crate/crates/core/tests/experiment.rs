use std::fs;
use std::path::Path;

use proptest::prelude::*;
use rmalm_core::experiment::{emit_rate_report, run_experiment, ExperimentConfig, Overrides};
use rmalm_core::metrics::{metrics_to_csv, parse_metrics_csv, write_metrics_csv, MetricsRow};
use rmalm_core::{Error, GroundTruth};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO
}

fn row() -> impl Strategy<Value = MetricsRow> {
    (
        0usize..1000,
        0u64..1_000_000,
        prop::option::of(finite()),
        (0.0f64..1e3, 0.0f64..1e3),
        prop::option::of(0.0f64..1e6),
        prop::option::of(prop::num::f64::POSITIVE),
        0.0f64..1e4,
    )
        .prop_map(|(k, cum_inner, obj, (a, b), dx, dy, wall)| MetricsRow {
            k,
            cum_inner,
            obj,
            avg_viol: a.min(b),
            max_viol: a.max(b),
            dist_sq_x: dx,
            dist_sq_y: dy,
            wall_time_s: wall,
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(row(), 0..20)) {
        let parsed = parse_metrics_csv(&metrics_to_csv(&rows)).unwrap();
        prop_assert_eq!(parsed, rows);
    }
}

#[test]
fn header_is_versioned_and_checked() {
    let csv = metrics_to_csv(&[]);
    assert!(csv.starts_with("# rmalm-metrics v1\nk,cum_inner,obj,avg_viol,max_viol,dist_sq_x,dist_sq_y,wall_time_s"));
    let renamed = csv.replace("dist_sq_y", "dual_error");
    assert!(matches!(parse_metrics_csv(&renamed), Err(Error::Schema(_))));
}

fn geometric_rows(rate: f64, scale: f64) -> Vec<MetricsRow> {
    (0..10)
        .map(|k| MetricsRow {
            k,
            cum_inner: 10 * k as u64,
            obj: None,
            avg_viol: 0.0,
            max_viol: 0.0,
            dist_sq_x: None,
            dist_sq_y: Some(scale * rate.powi(k as i32)),
            wall_time_s: 0.0,
        })
        .collect()
}

#[test]
fn rate_report_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_metrics_csv(&a, &geometric_rows(0.5, 1.0)).unwrap();
    write_metrics_csv(&b, &geometric_rows(0.5, 3.0)).unwrap();
    let out = dir.path().join("report");
    let report = emit_rate_report(&[a.clone(), b.clone()], Some((1.0, 1.0)), &out).unwrap();
    assert!((report.fit.r_squared - 1.0).abs() <= 1e-12);
    assert!((report.measured_rate - 0.5).abs() <= 1e-12);
    assert_eq!(report.predicted_rate, Some(0.5));
    assert!(out.join("rate_report.json").exists());
    assert!(fs::read_to_string(out.join("rate_report.txt")).unwrap().contains("r_squared"));

    assert!(matches!(
        emit_rate_report(std::slice::from_ref(&a), None, &out),
        Err(Error::Parameter(_))
    ));

    let c = dir.path().join("c.csv");
    let mut rows = geometric_rows(0.5, 1.0);
    rows.iter_mut().for_each(|r| r.dist_sq_y = None);
    write_metrics_csv(&c, &rows).unwrap();
    assert!(matches!(emit_rate_report(&[a, c], None, &out), Err(Error::Schema(_))));
}

const QP_CONFIG: &str = r#"
[problem]
kind = "linear_qp"
n = 5
m = 3
samples = 100
seed = 4

[solver]
kind = "rmalm"
c = 1.0
outer_iters = 8
eta = 2.0
beta = 5.0
growth_base = 2.0

[run]
seeds = [1, 2, 3]
oracle = true
"#;

fn run(dir: &Path, text: &str, out: &str) -> rmalm_core::Result<rmalm_core::experiment::RunSummary> {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(
        &path,
        &Overrides {
            out: Some(dir.join(out)),
            ..Default::default()
        },
    )?;
    run_experiment(&cfg, &path)
}

fn strip_wall_time(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(dir.path(), QP_CONFIG, "a").unwrap();
    run(dir.path(), QP_CONFIG, "b").unwrap();
    for seed in 1..=3 {
        let name = format!("metrics_seed{seed}.csv");
        let a = fs::read_to_string(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(strip_wall_time(&a), strip_wall_time(&b));
        let manifest = fs::read_to_string(dir.path().join("a").join(format!("manifest_seed{seed}.json"))).unwrap();
        let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
        assert_eq!(manifest["seed"], seed);
        assert_eq!(manifest["config"]["solver"]["kind"], "rmalm");
    }
    let gt = GroundTruth::read(dir.path().join("a/ground_truth.json")).unwrap();
    assert_eq!(gt.instance_hash, first.instance_hash);
    let rate = first.rate.expect("rate report with three seeds");
    assert!(rate.fit.slope < 0.0);
    assert!(dir.path().join("a/summary.json").exists());
}

#[test]
fn mismatched_ground_truth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let gt = GroundTruth {
        instance_hash: "0".repeat(64),
        x_opt: vec![0.0; 5],
        y_star: vec![0.0; 3],
        f_opt: 0.0,
        tol: 1e-10,
    };
    gt.write(dir.path().join("gt.json")).unwrap();
    let text = QP_CONFIG.replace("oracle = true", "ground_truth = \"gt.json\"");
    assert!(matches!(run(dir.path(), &text, "out"), Err(Error::Schema(_))));
}

#[test]
fn salm_config_with_slow_decay_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = QP_CONFIG.replace(
        "kind = \"rmalm\"\nc = 1.0\nouter_iters = 8\neta = 2.0\nbeta = 5.0\ngrowth_base = 2.0",
        "kind = \"salm\"\nq = 0.5",
    );
    match run(dir.path(), &text, "out") {
        Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.starts_with("solver.q must lie in (1/2, 1]"))),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn salm_and_baseline_runs_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let salm = QP_CONFIG.replace(
        "kind = \"rmalm\"\nc = 1.0\nouter_iters = 8\neta = 2.0\nbeta = 5.0\ngrowth_base = 2.0",
        "kind = \"salm\"\nq = 0.75\nsigma = 0.1\nouter_iters = 30",
    );
    let summary = run(dir.path(), &salm, "salm").unwrap();
    assert_eq!(summary.seeds.len(), 3);
    assert!(dir.path().join("salm/salm_seed2.csv").exists());

    let pdsg = QP_CONFIG.replace(
        "kind = \"rmalm\"\nc = 1.0\nouter_iters = 8\neta = 2.0\nbeta = 5.0\ngrowth_base = 2.0",
        "kind = \"pdsg\"\niters = 2000\nrecord_every = 200",
    );
    run(dir.path(), &pdsg, "pdsg").unwrap();
    let rows = rmalm_core::metrics::read_metrics_csv(dir.path().join("pdsg/metrics_avg_seed1.csv")).unwrap();
    assert_eq!(rows.len(), 11);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    match run(dir.path(), QP_CONFIG, "blocker/out") {
        Err(e) => assert_eq!(e.exit_code(), 1, "{e}"),
        Ok(_) => panic!("expected failure"),
    }
}
