use std::fs;
use std::process::{Command, Output};

fn ou_verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ou-verify")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = ou_verify(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_flags_are_usage_errors() {
    assert_eq!(ou_verify(&["mc", "--s", "0"]).status.code(), Some(2));
}

#[test]
fn help_documents_csv_columns() {
    let out = ou_verify(&["propagate", "--help"]);
    assert!(stdout(&out).contains("CSV columns"));
}

#[test]
fn verify_passing_and_failing_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("bench.toml");
    fs::write(&good, "[suite]\nchecks = [\"closed-form-benchmark\", \"evolution-law\"]\noutput = \"out\"\n").unwrap();
    let out = ou_verify(&["verify", "--config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with("check,value,tolerance,pass,error"));
    assert_eq!(csv.lines().count(), 3);

    let bad = dir.path().join("zero.toml");
    fs::write(&bad, "[suite]\nchecks = [\"evolution-law\"]\n[suite.tolerances]\nevolution-law = 0.0\n").unwrap();
    let out = ou_verify(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn propagate_constant_is_fixed() {
    let out = ou_verify(&["propagate", "--s", "0", "--t", "2", "--phi", "const:3", "--x-grid", "-1:1:3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,re,im,error_estimate"));
    for line in lines {
        let re: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((re - 3.0).abs() < 1e-12);
    }
}

#[test]
fn measures_and_moments_tables() {
    let out = ou_verify(&["measures", "--t-grid", "0:1:3", "--family", "gauss:0.5,2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("t,mean0,cov_00\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with('#')).count(), 2);

    let out = ou_verify(&["dump-moments", "--t-grid", "0:1:2"]);
    assert!(stdout(&out).starts_with("t,g0,q_00,horizon\n"));
    let out = ou_verify(&["dump-evolution", "--t-grid", "0:1:2"]);
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn solve_reports_residual() {
    let out = ou_verify(&["solve", "--t1", "0", "--t2", "1", "--phi", "cos:1", "--h", "const:1", "--nodes", "41"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("s,mean_re,mean_im,l2_norm\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 42);
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# residual = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-3);
}

#[test]
fn monte_carlo_is_seeded() {
    let args = ["mc", "--s", "0", "--t", "1", "--x", "1", "--phi", "poly:x0", "--paths", "500", "--dt", "0.01", "--seed", "4"];
    let a = stdout(&ou_verify(&args));
    assert_eq!(a, stdout(&ou_verify(&args)));
    assert!(a.starts_with("mean_re,mean_im,stderr,dt,paths\n"));
}

#[test]
fn estimate_fits_small_gap_slope() {
    let out = ou_verify(&["estimate", "--alpha", "1", "--range", "1e-3:1e-1", "--points", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let slope: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# slope = "))
        .and_then(|rest| rest.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 0.5).abs() < 0.1);
}
