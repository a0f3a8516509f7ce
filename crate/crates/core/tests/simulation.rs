use approx::assert_relative_eq;
use catbond::estimators::{
    gamma_tilt, is_trigger_probability, lognormal_tilt, mc_trigger_probability, path_contributions, LOGNORMAL_TILT_TOL,
};
use catbond::loss_model::trigger_prob_series_gamma;
use catbond::pricer::{price_coupon_cat, price_recovery_cat, price_zero_coupon_cat, REFERENCE_COUPON_RATE};
use catbond::term_structure::{riccati_solve, vasicek_ab, zcb_price, AffineCoefficients, DEFAULT_RICCATI_STEP};
use catbond::{BondSpec, EstimatorMethod, LossModel, SeverityKind, TriggerSpec, VasicekParams};
use proptest::prelude::*;

const ORACLES: &str = include_str!("../fixtures/oracles.csv");

fn oracle(name: &str) -> f64 {
    ORACLES
        .lines()
        .find_map(|l| l.strip_prefix(name).and_then(|r| r.strip_prefix(',')))
        .unwrap_or_else(|| panic!("{name} missing from oracles.csv"))
        .parse()
        .unwrap()
}

fn reference(kind: SeverityKind) -> LossModel {
    LossModel::new(35.0, kind.reference()).unwrap()
}

fn one_year() -> TriggerSpec {
    TriggerSpec::new(9e9, 1.0).unwrap()
}

#[test]
fn riccati_tracks_the_closed_form_bond_price() {
    let p = VasicekParams::reference();
    let curve = riccati_solve(&AffineCoefficients::vasicek(&p), 2.0, DEFAULT_RICCATI_STEP).unwrap();
    for t in [0.0, 0.3, 1.0, 1.7] {
        let (a, b) = vasicek_ab(&p, t, 2.0).unwrap();
        assert_relative_eq!(curve.a_at(t).unwrap(), a, epsilon = 1e-10);
        assert_relative_eq!(curve.b_at(t).unwrap(), b, epsilon = 1e-10);
        assert_relative_eq!(curve.price(0.03, 1.0, t).unwrap(), zcb_price(&p, 0.03, 1.0, t, 2.0).unwrap(), epsilon = 1e-10);
    }
}

#[test]
fn tilts_match_the_frozen_oracles() {
    let g = gamma_tilt(&reference(SeverityKind::Gamma), &one_year()).unwrap();
    assert_relative_eq!(g.poisson_tilt, oracle("gamma_poisson_tilt"), max_relative = 1e-10);
    assert_relative_eq!(g.severity_tilt, oracle("gamma_severity_tilt"), max_relative = 1e-10);

    let l = lognormal_tilt(&reference(SeverityKind::Lognormal), &one_year(), LOGNORMAL_TILT_TOL).unwrap();
    assert_relative_eq!(l.poisson_tilt, oracle("lognormal_poisson_tilt"), max_relative = 1e-8);
    assert_relative_eq!(l.severity_tilt, oracle("lognormal_severity_tilt"), max_relative = 1e-8);
}

#[test]
fn both_estimators_agree_with_the_series() {
    let model = reference(SeverityKind::Gamma);
    let theta = trigger_prob_series_gamma(&model, &one_year(), 1e-14).unwrap();
    assert_relative_eq!(theta, oracle("gamma_trigger_probability"), max_relative = 1e-10);
    let mc = mc_trigger_probability(&model, &one_year(), 50_000, 3).unwrap();
    let is = is_trigger_probability(&model, &one_year(), 50_000, 4).unwrap();
    assert_eq!(mc.method, EstimatorMethod::PlainMc);
    assert!((mc.estimate - theta).abs() < 4.0 * mc.std_error, "{mc:?}");
    assert!((is.estimate - theta).abs() < 4.0 * is.std_error, "{is:?}");
    assert!(is.std_error < mc.std_error);
}

#[test]
fn contributions_reproduce_the_estimator() {
    let model = reference(SeverityKind::Lognormal);
    let r = is_trigger_probability(&model, &one_year(), 3000, 9).unwrap();
    let c = path_contributions(&model, &one_year(), r.tilt.as_ref(), 3000, 9).unwrap();
    assert_relative_eq!(c.iter().sum::<f64>() / 3000.0, r.estimate, max_relative = 1e-12);
}

#[test]
fn degenerate_threshold_needs_no_simulation() {
    let spec = TriggerSpec::new(0.0, 1.0).unwrap();
    let r = is_trigger_probability(&reference(SeverityKind::Gamma), &spec, 10, 1).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.estimate, 1.0);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(LossModel::new(-1.0, SeverityKind::Gamma.reference()).is_err());
    assert!(TriggerSpec::new(9e9, -0.5).is_err());
    assert!(VasicekParams::new(-0.2, 0.03, 0.02).is_err());
    assert!(mc_trigger_probability(&reference(SeverityKind::Gamma), &one_year(), 0, 1).is_err());
    assert!(BondSpec::equally_spaced(1.0, 1.0, 2, 0.05, 9e9).unwrap().with_recovery(1.5).is_err());
}

#[test]
fn prices_are_seed_deterministic() {
    let rates = VasicekParams::reference();
    let model = reference(SeverityKind::Lognormal);
    let bond = BondSpec::equally_spaced(1.0, 1.0, 4, REFERENCE_COUPON_RATE, 9e9).unwrap();
    let a = price_coupon_cat(&rates, 0.03, &model, &bond, 2000, 77).unwrap();
    let b = price_coupon_cat(&rates, 0.03, &model, &bond, 2000, 77).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_date_trigger_probs.len(), 5);
    assert!(a.per_date_trigger_probs.windows(2).all(|w| w[0].time <= w[1].time));
    assert_eq!(a.per_date_trigger_probs[3].time, 1.0);
}

#[test]
fn zero_recovery_matches_the_plain_coupon_price() {
    let rates = VasicekParams::reference();
    let model = reference(SeverityKind::Gamma);
    let bond = BondSpec::equally_spaced(1.0, 2.0, 8, REFERENCE_COUPON_RATE, 9e9).unwrap();
    let plain = price_coupon_cat(&rates, 0.03, &model, &bond, 2000, 5).unwrap();
    let zero = price_recovery_cat(&rates, 0.03, &model, &bond.clone().with_recovery(0.0).unwrap(), 2000, 5).unwrap();
    assert_relative_eq!(plain.price, zero.price, max_relative = 1e-14);
}

#[test]
fn zero_coupon_price_is_survival_times_discount() {
    let rates = VasicekParams::reference();
    let model = reference(SeverityKind::Gamma);
    let r = price_zero_coupon_cat(&rates, 0.03, &model, 1.0, 1.0, 9e9, 20_000, 6).unwrap();
    let theta = r.per_date_trigger_probs[0].probability;
    assert_relative_eq!(r.price, (1.0 - theta) * zcb_price(&rates, 0.03, 1.0, 0.0, 1.0).unwrap(), max_relative = 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn higher_thresholds_are_safer(lo in 6e9f64..10e9, gap in 1e9f64..4e9) {
        let rates = VasicekParams::reference();
        let model = reference(SeverityKind::Gamma);
        let price = |d: f64| {
            let bond = BondSpec::equally_spaced(1.0, 1.0, 2, REFERENCE_COUPON_RATE, d).unwrap();
            price_coupon_cat(&rates, 0.03, &model, &bond, 4000, 1).unwrap().price
        };
        // Common seed: the importance-sampled estimates move together.
        prop_assert!(price(lo + gap) >= price(lo) - 2e-3);
    }

    #[test]
    fn bond_price_falls_with_the_short_rate(r0 in 0.0f64..0.08, dr in 0.005f64..0.05, t in 0.1f64..5.0) {
        let p = VasicekParams::reference();
        prop_assert!(zcb_price(&p, r0 + dr, 1.0, 0.0, t).unwrap() < zcb_price(&p, r0, 1.0, 0.0, t).unwrap());
    }
}
