use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use ou_core::benchmarks::{autonomous_scalar, periodic_scalar};
use ou_core::linalg::Vector;
use ou_core::model::OuModel;
use ou_core::propagator::{apply, ApplyOptions, TestFunction, TrigTerm};
use ou_core::spaces::TimeTrig;
use ou_core::verify::split_seed;
use ou_core::C64;

fn periodic_model() -> &'static OuModel {
    static MODEL: OnceLock<OuModel> = OnceLock::new();
    MODEL.get_or_init(|| OuModel::with_defaults(periodic_scalar(), (0.0, 12.0)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flows_compose_on_grid_points(a in 0usize..400, b in 0usize..400, c in 0usize..400) {
        let model = periodic_model();
        let step = model.cache().step();
        let mut ix = [a, b, c];
        ix.sort_unstable();
        let [s, r, t] = ix.map(|i| i as f64 * step);
        let direct = model.flow(s, t).unwrap();
        let split = model.flow(s, r).unwrap().then(&model.flow(r, t).unwrap());
        prop_assert!((&direct.u - &split.u).abs().max() < 1e-12);
        prop_assert!((&direct.g - &split.g).abs().max() < 1e-12);
        prop_assert!((&direct.q - &split.q).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_stays_symmetric_nonnegative(s in 0.0f64..6.0, gap in 0.0f64..6.0) {
        let model = periodic_model();
        let q = model.flow(s, s + gap).unwrap().q;
        prop_assert!((q[(0, 0)]) >= 0.0);
        prop_assert!((&q - q.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn propagator_contracts_trig_functions(
        s in 0.0f64..5.0,
        gap in 0.0f64..5.0,
        k in -3.0f64..3.0,
        x in -4.0f64..4.0,
    ) {
        let model = periodic_model();
        let phi = TestFunction::trig(C64::new(1.0, 0.0), Vector::from_element(1, k));
        let field = apply(model.cache(), s, s + gap, &phi, &ApplyOptions::default()).unwrap();
        prop_assert!(field.eval(&Vector::from_element(1, x)).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn propagator_fixes_constants(s in 0.0f64..5.0, gap in 0.0f64..5.0, x in -4.0f64..4.0) {
        let model = periodic_model();
        let one = TestFunction::trig(C64::new(1.0, 0.0), Vector::zeros(1));
        let field = apply(model.cache(), s, s + gap, &one, &ApplyOptions::default()).unwrap();
        let v = field.eval(&Vector::from_element(1, x));
        prop_assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn time_trig_product_matches_pointwise(
        a in proptest::collection::vec(-1.0f64..1.0, 5),
        b in proptest::collection::vec(-1.0f64..1.0, 5),
        t in -3.0f64..3.0,
    ) {
        let p = 2.0;
        let f = TimeTrig::real(a[0], &a[1..3], &a[3..5], p);
        let g = TimeTrig::real(b[0], &b[1..3], &b[3..5], p);
        let fg = f.mul(&g).unwrap();
        prop_assert!((fg.value(t) - f.value(t) * g.value(t)).norm() < 1e-12);
    }

    #[test]
    fn split_seeds_are_stable(seed in any::<u64>()) {
        prop_assert_eq!(split_seed(seed, "alpha"), split_seed(seed, "alpha"));
        prop_assert_ne!(split_seed(seed, "alpha"), split_seed(seed, "beta"));
    }
}

#[test]
fn autonomous_mean_and_variance_closed_form() {
    let model = OuModel::with_defaults(autonomous_scalar(), (0.0, 12.0)).unwrap();
    for &(s, t) in &[(0.0, 0.5), (1.0, 3.0), (2.0, 9.5)] {
        let flow = model.flow(s, t).unwrap();
        let gap: f64 = t - s;
        assert_abs_diff_eq!(flow.u[(0, 0)], (-gap).exp(), epsilon = 1e-8);
        assert_abs_diff_eq!(flow.q[(0, 0)], 1.0 - (-2.0 * gap).exp(), epsilon = 1e-8);
    }
    let law = model.canonical(4.0).unwrap();
    assert_abs_diff_eq!(law.mean()[0], 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(law.cov()[(0, 0)], 1.0, epsilon = 1e-8);
}

#[test]
fn trig_terms_propagate_like_characteristic_functions() {
    let model = OuModel::with_defaults(autonomous_scalar(), (0.0, 12.0)).unwrap();
    let term = TrigTerm::new(C64::new(1.0, 0.0), Vector::from_element(1, 1.0));
    let gap: f64 = 1.5;
    let out = ou_core::propagator::apply_exact_trigexp(model.cache(), 0.0, gap, &term).unwrap();
    let x = Vector::from_element(1, 0.7);
    let expected = C64::from_polar((-(1.0 - (-2.0 * gap).exp()) / 2.0).exp(), (-gap).exp() * 0.7);
    assert!((out.eval(&x) - expected).norm() < 1e-8);
}
