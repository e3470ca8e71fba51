use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hdica::experiment::{quantile, read_records};
use hdica::init::init_naive_matricization;
use hdica::io::{self, FitRecord};
use hdica::tensorops::DataMatrix;

fn hdica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdica")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hdica(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["simulate", "--d", "4", "--n", "10", "--dist", "laplace", "--seed", "7", "--out-dir", p(out)]);
    }
    for f in ["data.csv", "mixing.csv", "sources.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.ends_with('\n'));
}

#[test]
fn identity_mixing_and_csv_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["simulate", "--d", "3", "--n", "50", "--mixing", "identity", "--out-dir", p(dir.path())]);
    assert_eq!(json(&stdout)["mixing"]["kind"], "identity");
    let data = fs::read(dir.path().join("data.csv")).unwrap();
    assert_eq!(data, fs::read(dir.path().join("sources.csv")).unwrap());

    let (m, _) = io::parse_matrix(data.as_slice(), false).unwrap();
    let mut again = Vec::new();
    io::write_matrix(&mut again, &m, None).unwrap();
    assert_eq!(again, data);

    let dir2 = tempfile::tempdir().unwrap();
    ok(&["simulate", "--d", "3", "--n", "5", "--header", "--out-dir", p(dir2.path())]);
    let text = fs::read_to_string(dir2.path().join("data.csv")).unwrap();
    assert!(text.starts_with("x1,x2,x3\n"));
    ok(&["fit", "--input", p(&dir2.path().join("data.csv")), "--header", "--prewhiten", "none", "--init", "random"]);
}

#[test]
fn fit_recovers_identity_mixed_rademacher() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--d", "3", "--n", "5000", "--dist", "rademacher", "--mixing", "identity", "--seed", "3", "--out-dir", p(d)]);
    let fit = d.join("fit.json");
    ok(&["fit", "--input", p(&d.join("data.csv")), "--prewhiten", "none", "--seed", "1", "--out", p(&fit)]);
    let record = FitRecord::from_json(&fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(record.schema, 1);
    assert_eq!((record.d, record.n, record.n_fit), (3, 5000, 5000));
    assert_eq!(record.a_hat.len(), 3);

    let report = json(&ok(&["eval", "--estimate", p(&fit), "--truth", p(&d.join("mixing.csv"))]));
    assert!(report["ell_m"].as_f64().unwrap() <= 0.15, "{report}");
    assert!(report["ell_a"].as_f64().unwrap() <= report["ell_m"].as_f64().unwrap() + 1e-12);

    let same = json(&ok(&["eval", "--estimate", p(&d.join("mixing.csv")), "--truth", p(&d.join("mixing.csv"))]));
    assert_eq!(same["ell_m"].as_f64().unwrap(), 0.0);
    assert_eq!(same["ell_a"].as_f64().unwrap(), 0.0);

    let csv = ok(&["eval", "--estimate", p(&fit), "--truth", p(&d.join("mixing.csv")), "--format", "csv"]);
    assert!(csv.starts_with("ell_m,ell_a\n"));
}

#[test]
fn zero_iterations_return_the_naive_initializer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--d", "4", "--n", "800", "--seed", "5", "--out-dir", p(d)]);
    let fit = d.join("fit.json");
    ok(&["fit", "--input", p(&d.join("data.csv")), "--T", "0", "--init", "naive", "--prewhiten", "none", "--out", p(&fit)]);
    let record = FitRecord::from_json(&fs::read_to_string(&fit).unwrap()).unwrap();
    let data = DataMatrix::new(io::read_matrix(&d.join("data.csv"), false).unwrap()).unwrap();
    let naive = init_naive_matricization(&data).unwrap().direction;
    let a_hat = record.a_hat().unwrap();
    assert!((a_hat.column(0) - &naive).norm() < 1e-12);
    assert!(record.iters_used.iter().all(|&t| t == 0));
    for (j, diag) in record.diagnostics.components.iter().enumerate() {
        assert!((a_hat.column(j) - &diag.candidate.direction).norm() < 1e-12);
    }
}

#[test]
fn malformed_input_is_a_data_error_citing_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,abc\n").unwrap();
    let out = hdica(&["fit", "--input", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(hdica(&["fit"]).status.code(), Some(1));
    assert_eq!(hdica(&["fit", "--input", "x.csv", "--init", "bogus"]).status.code(), Some(1));
    assert_eq!(hdica(&["fit", "--input", "x.csv", "--prewhiten", "sideways"]).status.code(), Some(2));
    assert_eq!(hdica(&["experiment", "no_such_preset"]).status.code(), Some(1));
    assert_eq!(hdica(&["simulate", "--d", "2", "--n", "5", "--dist", "student_t:4"]).status.code(), Some(1));
    assert_eq!(hdica(&["--help"]).status.code(), Some(0));
}

#[test]
fn infer_entry_interval_matches_laplace_formula() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--d", "3", "--n", "6000", "--seed", "2", "--out-dir", p(d)]);
    let fit = d.join("fit.json");
    ok(&["fit", "--input", p(&d.join("data.csv")), "--prewhiten", "none", "--out", p(&fit)]);
    let contrasts = d.join("contrasts.txt");
    fs::write(&contrasts, "entry 1 2\nlinear 2 1 0 0\n").unwrap();
    let args = ["infer", "--result", p(&fit), "--contrasts", p(&contrasts), "--moments", "analytic:laplace"];
    let report = json(&ok(&args));
    let record = FitRecord::from_json(&fs::read_to_string(&fit).unwrap()).unwrap();
    let a12 = record.a_hat_whitened[0][1];
    let iv = &report["intervals"][0];
    let half = 0.5 * (iv["upper"].as_f64().unwrap() - iv["lower"].as_f64().unwrap());
    let want = 1.96 * (10.0 * (1.0 - a12 * a12)).sqrt() / 6000f64.sqrt();
    assert!((half - want).abs() / want < 1e-4, "{half} vs {want}");
    assert_eq!(report["n"], 6000);

    let plugin = json(&ok(&["infer", "--result", p(&fit), "--contrasts", p(&contrasts), "--data", p(&d.join("data.csv"))]));
    assert!(plugin["intervals"][0]["sigma"].as_f64().unwrap() > 0.0);

    let mut level = args.to_vec();
    level.extend(["--level", "1.5"]);
    assert_eq!(hdica(&level).status.code(), Some(1));

    fs::write(&contrasts, "quadratic 1 2\n").unwrap();
    assert_eq!(hdica(&args).status.code(), Some(2));
}

fn strip_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[12] = "";
            f.join(",")
        })
        .collect()
}

#[test]
fn experiment_schema_threads_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (one, many) = (dir.path().join("one"), dir.path().join("many"));
    let base = ["experiment", "method_comparison", "--reps", "2", "--d", "6", "--n", "500", "--seed", "9"];
    let mut a = base.to_vec();
    a.extend(["--threads", "1", "--out-dir", p(&one)]);
    ok(&a);
    let mut b = base.to_vec();
    b.extend(["--threads", "4", "--out-dir", p(&many)]);
    ok(&b);

    let raw = fs::read_to_string(one.join("method_comparison_records.csv")).unwrap();
    let raw_many = fs::read_to_string(many.join("method_comparison_records.csv")).unwrap();
    assert_eq!(strip_wall_time(&raw), strip_wall_time(&raw_many));

    let records = read_records(raw.as_bytes()).unwrap();
    assert_eq!(records.len(), 2 * 4);
    for r in &records {
        assert!(r.error.is_none());
        for v in [r.ell_m.unwrap(), r.ell_a.unwrap()] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    // Summary quantiles against an independent recomputation.
    let summary = fs::read_to_string(one.join("method_comparison_summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let mut checked = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let mut v: Vec<f64> = records
            .iter()
            .filter(|r| r.scenario == f[col("scenario")] && r.method == f[col("method")])
            .filter_map(|r| r.metric(f[col("metric")]))
            .collect();
        v.sort_by(f64::total_cmp);
        let median: f64 = f[col("median")].parse().unwrap();
        let q25: f64 = f[col("q25")].parse().unwrap();
        let expected_median = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
        assert!((median - expected_median).abs() <= 1e-15 * expected_median.abs().max(1.0));
        assert!((q25 - quantile(&v, 0.25)).abs() <= 1e-15);
        checked += 1;
    }
    assert!(checked >= 8);
    assert!(one.join("method_comparison_spec.json").exists());
}

#[test]
fn threads_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hdica"))
        .args(["experiment", "kurtosis_breakdown", "--reps", "1", "--d", "3", "--n", "60", "--out-dir", p(dir.path())])
        .env("HDICA_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = fs::read_to_string(dir.path().join("kurtosis_breakdown_records.csv")).unwrap();
    let records = read_records(raw.as_bytes()).unwrap();
    // n = 60 with both methods, then n = 4d² = 36 with projection.
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r.max_inner.unwrap() <= 1.0 + 1e-12));

    let bad = Command::new(env!("CARGO_BIN_EXE_hdica"))
        .args(["experiment", "kurtosis_breakdown", "--out-dir", p(dir.path())])
        .env("HDICA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
