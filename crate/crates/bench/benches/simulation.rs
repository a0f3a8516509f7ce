use catbond::estimators::{is_trigger_probability, mc_trigger_probability};
use catbond::pricer::{price_coupon_cat, REFERENCE_COUPON_RATE};
use catbond::term_structure::{riccati_solve, AffineCoefficients, DEFAULT_RICCATI_STEP};
use catbond::{BondSpec, SeverityKind, VasicekParams};
use catbond_bench::{one_year_trigger, reference_loss, THRESHOLD};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn trigger_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("trigger_10k_paths");
    let spec = one_year_trigger();
    for kind in [SeverityKind::Gamma, SeverityKind::Lognormal] {
        let model = reference_loss(kind);
        group.bench_with_input(BenchmarkId::new("plain_mc", kind), &model, |b, m| {
            b.iter(|| mc_trigger_probability(m, &spec, 10_000, black_box(1)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("importance", kind), &model, |b, m| {
            b.iter(|| is_trigger_probability(m, &spec, 10_000, black_box(1)).unwrap())
        });
    }
    group.finish();
}

fn coupon_bond(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupon_bond_10k_paths");
    group.sample_size(20);
    let rates = VasicekParams::reference();
    for n in [0u32, 4, 12] {
        let bond = BondSpec::equally_spaced(1.0, 1.0, n, REFERENCE_COUPON_RATE, THRESHOLD).unwrap();
        let model = reference_loss(SeverityKind::Gamma);
        group.bench_with_input(BenchmarkId::new("gamma", n), &bond, |b, bond| {
            b.iter(|| price_coupon_cat(&rates, 0.03, &model, bond, 10_000, black_box(2)).unwrap())
        });
    }
    group.finish();
}

fn riccati(c: &mut Criterion) {
    let coeffs = AffineCoefficients::vasicek(&VasicekParams::reference());
    c.bench_function("riccati_rk4_two_years", |b| {
        b.iter(|| riccati_solve(&coeffs, black_box(2.0), DEFAULT_RICCATI_STEP).unwrap())
    });
}

criterion_group!(benches, trigger_estimators, coupon_bond, riccati);
criterion_main!(benches);
