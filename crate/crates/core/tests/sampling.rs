use ou_core::benchmarks::periodic_scalar;
use ou_core::linalg::Vector;
use ou_core::model::OuModel;
use ou_core::sde::{exact_terminal_sample, ks_critical_1pct, ks_statistic, simulate_paths};

#[test]
fn euler_maruyama_matches_exact_law() {
    let model = OuModel::with_defaults(periodic_scalar(), (0.0, 12.0)).unwrap();
    let x = Vector::from_element(1, 0.8);
    let (s, t, k) = (0.5, 1.5, 100_000);
    let exact = exact_terminal_sample(model.cache(), s, t, &x, k, 11).unwrap();
    let stepped = simulate_paths(model.system(), s, t, &x, k, 1e-4, 12).unwrap();
    let d = ks_statistic(&exact.marginal(0), &stepped.marginal(0));
    assert!(d < ks_critical_1pct(k, k), "statistic {d}");
}

#[test]
fn ensembles_are_reproducible() {
    let sys = periodic_scalar();
    let x = Vector::from_element(1, -0.3);
    let a = simulate_paths(&sys, 0.0, 0.7, &x, 500, 1e-2, 3).unwrap();
    let b = simulate_paths(&sys, 0.0, 0.7, &x, 500, 1e-2, 3).unwrap();
    assert_eq!(a.samples, b.samples);
    let c = simulate_paths(&sys, 0.0, 0.7, &x, 500, 1e-2, 4).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn exact_samples_are_unbiased() {
    let model = OuModel::with_defaults(periodic_scalar(), (0.0, 12.0)).unwrap();
    let x = Vector::from_element(1, 1.2);
    let k = 40_000;
    let flow = model.flow(1.0, 3.0).unwrap();
    let ens = exact_terminal_sample(model.cache(), 1.0, 3.0, &x, k, 5).unwrap();
    let (mean, _) = ens.moments();
    let target = flow.u[(0, 0)] * 1.2 + flow.g[0];
    assert!((mean[0] - target).abs() <= 4.0 * flow.q[(0, 0)].sqrt() / (k as f64).sqrt());
}
