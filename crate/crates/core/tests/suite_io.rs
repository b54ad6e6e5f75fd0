use std::fs;

use ou_core::error::Error;
use ou_core::verify::{run_suite, SuiteConfig, CSV_HEADER};

#[test]
fn config_file_round_trip_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.toml");
    fs::write(
        &path,
        r#"
dim = 1
A = { kind = "constant", value = [[-1.0]] }
B = { kind = "constant", value = [[1.4142135623730951]] }
f = { kind = "constant", value = [0.0] }

[suite]
checks = ["semigroup-law", "evolution-law"]
seed = 9
output = "out"
"#,
    )
    .unwrap();
    let cfg = SuiteConfig::load(&path).unwrap();
    assert_eq!(cfg.output.as_deref(), Some(dir.path().join("out").as_path()));
    let report = run_suite(&cfg).unwrap();
    assert!(report.all_passed(), "{}", report.to_text());
    report.write(&dir.path().join("out")).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("out/report.txt").exists());
}

#[test]
fn unknown_checks_are_rejected() {
    let err = SuiteConfig::parse("[suite]\nchecks = [\"no-such-check\"]\n").unwrap_err();
    assert!(matches!(err, Error::UnknownCheck(_)), "{err}");
}
