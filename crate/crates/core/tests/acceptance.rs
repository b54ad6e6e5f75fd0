//! End-to-end acceptance run: the full default suite, executed twice.
//!
//! Prints one `PASS`/`FAIL` line per criterion and fails if any criterion fails.

use std::time::{Duration, Instant};

use ou_core::verify::{run_suite, Report, SuiteConfig};

struct Criterion {
    label: &'static str,
    checks: &'static [&'static str],
    budget: Duration,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: &[Criterion] = &[
    Criterion { label: "closed-form autonomous benchmark", checks: &["closed-form-benchmark"], budget: secs(5) },
    Criterion { label: "quadrature vs Monte Carlo", checks: &["mehler-monte-carlo"], budget: secs(60) },
    Criterion {
        label: "invariant measure families",
        checks: &["fourier-identity", "point-mass-family", "perturbed-detector"],
        budget: secs(10),
    },
    Criterion {
        label: "smoothing rates",
        checks: &[
            "smoothing-small-a1-autonomous",
            "smoothing-small-a2-autonomous",
            "smoothing-small-a1-periodic",
            "smoothing-small-a2-periodic",
            "smoothing-large-autonomous",
            "smoothing-large-periodic",
        ],
        budget: secs(120),
    },
    Criterion { label: "inverse covariance shape", checks: &["qinv-small-gap", "qinv-large-gap"], budget: secs(10) },
    Criterion {
        label: "identity suite",
        checks: &[
            "dissipativity",
            "product-rule",
            "integrated-product-rule",
            "commutator",
            "invop-residual",
            "gradient-energy",
        ],
        budget: secs(30),
    },
    Criterion {
        label: "semigroup laws",
        checks: &["semigroup-law", "periodic-contraction", "evolution-law"],
        budget: secs(10),
    },
    Criterion {
        label: "maximal regularity",
        checks: &["maximal-regularity-residual", "maximal-regularity-stability"],
        budget: secs(120),
    },
    Criterion { label: "entrance convergence", checks: &["entrance-convergence"], budget: secs(15) },
];

const SUITE_BUDGET: Duration = secs(300);

fn judge(report: &Report, c: &Criterion) -> (bool, String) {
    let mut ok = true;
    let mut elapsed = Duration::ZERO;
    let mut notes = Vec::new();
    for name in c.checks {
        match report.record(name) {
            Some(r) => {
                elapsed += r.runtime;
                ok &= r.pass;
                let status = if r.pass { "ok" } else { "FAILED" };
                notes.push(format!("{name}={:.3e}/{:.1e} {status}", r.value, r.tolerance));
            }
            None => {
                ok = false;
                notes.push(format!("{name} missing"));
            }
        }
    }
    let in_time = elapsed < c.budget;
    let detail = format!("{:.2}s of {}s; {}", elapsed.as_secs_f64(), c.budget.as_secs(), notes.join(", "));
    (ok && in_time, detail)
}

#[test]
fn acceptance_suite() {
    let cfg = SuiteConfig::default();
    let clock = Instant::now();
    let first = run_suite(&cfg).expect("first suite run");
    let first_elapsed = clock.elapsed();
    let second = run_suite(&cfg).expect("second suite run");

    let mut failures = Vec::new();
    for (i, c) in CRITERIA.iter().enumerate() {
        let (ok, detail) = judge(&first, c);
        println!("criterion {:>2} {} {}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" }, c.label);
        if !ok {
            failures.push(i + 1);
        }
    }

    let same_csv = first.to_csv().as_bytes() == second.to_csv().as_bytes();
    let ok = same_csv && first_elapsed < SUITE_BUDGET;
    println!(
        "criterion 10 {} reproducibility: identical csv = {same_csv}, suite {:.1}s of {}s",
        if ok { "PASS" } else { "FAIL" },
        first_elapsed.as_secs_f64(),
        SUITE_BUDGET.as_secs()
    );
    if !ok {
        failures.push(10);
    }

    assert!(failures.is_empty(), "failing criteria: {failures:?}\n{}", first.to_text());
}
