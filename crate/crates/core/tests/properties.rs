mod common;

use common::{action_poly, closed_fiber_vanishing_form, coeff, rng, section, section_of_form_degree};
use proptest::prelude::*;
use weylforge::chart_geometry::{covariant_derivative, sample_fiber_adapted_connection, sample_symmetric_connection, SampleBounds};
use weylforge::coeff_ring::{ChartSpec, CoeffFn, GaussRat};
use weylforge::fedosov_engine::{build_gamma, star_table, DiffOp, DiffOpSeries, FunctionMoyal, StarProduct};
use weylforge::lagrangian_forms::{check_normalization, fiber_primitive, normalize_closed_form};
use weylforge::weyl_algebra::{delta, delta_inv, filtration_degree, moyal, supercommutator, Caps, SymplecticData, WeylSection};

fn chart_for(seed: u64) -> ChartSpec {
    match seed % 3 {
        0 => ChartSpec::new(1, 1).unwrap(),
        1 => ChartSpec::new(2, 1).unwrap(),
        _ => ChartSpec::new(2, 2).unwrap(),
    }
}

fn sign_of(a: &WeylSection) -> GaussRat {
    GaussRat::from_int(if a.form_parity().unwrap_or(0).is_multiple_of(2) { 1 } else { -1 })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn hodge_decomposition(seed in any::<u64>()) {
        let c = chart_for(seed);
        let caps = Caps::new(2, 4);
        let a = section(&mut rng(seed), c, caps, 5, true).with_caps(caps.raised());
        let rebuilt = delta(&delta_inv(&a)).add(&delta_inv(&delta(&a))).add(&a.a00());
        prop_assert_eq!(rebuilt, a);
    }

    #[test]
    fn delta_squares_vanish(seed in any::<u64>()) {
        let c = chart_for(seed);
        let a = section(&mut rng(seed), c, Caps::new(2, 6), 6, true);
        prop_assert!(delta(&delta(&a)).is_zero());
        prop_assert!(delta_inv(&delta_inv(&a)).is_zero());
        prop_assert!(a.d().d().is_zero());
    }

    #[test]
    fn moyal_is_associative(seed in any::<u64>()) {
        let c = chart_for(seed);
        let s = SymplecticData::standard(c);
        let caps = Caps::new(3, 6);
        let mut r = rng(seed);
        let (a, b, d) = (section(&mut r, c, caps, 3, true), section(&mut r, c, caps, 3, true), section(&mut r, c, caps, 3, true));
        let left = moyal(&moyal(&a, &b, &s).unwrap(), &d, &s).unwrap();
        let right = moyal(&a, &moyal(&b, &d, &s).unwrap(), &s).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn supercommutator_is_graded_antisymmetric(seed in any::<u64>(), p in 0usize..3, q in 0usize..3) {
        let c = chart_for(seed);
        let s = SymplecticData::standard(c);
        let caps = Caps::new(2, 4);
        let mut r = rng(seed);
        let a = section_of_form_degree(&mut r, c, caps, 3, p);
        let b = section_of_form_degree(&mut r, c, caps, 3, q);
        let ab = supercommutator(&a, &b, &s).unwrap();
        let ba = supercommutator(&b, &a, &s).unwrap();
        let sign = GaussRat::from_int(if p * q % 2 == 0 { -1 } else { 1 });
        prop_assert_eq!(ab, ba.scale(&sign));
    }

    #[test]
    fn covariant_derivative_is_a_graded_derivation(seed in any::<u64>(), p in 0usize..2) {
        let c = chart_for(seed);
        let s = SymplecticData::standard(c);
        let caps = Caps::new(2, 4);
        let conn = sample_symmetric_connection(&s, seed, SampleBounds::default());
        let mut r = rng(seed);
        let a = section_of_form_degree(&mut r, c, caps, 3, p);
        let b = section(&mut r, c, caps, 3, false);
        let d = |x: &WeylSection| covariant_derivative(x, &conn, &s).unwrap();
        let lhs = d(&moyal(&a, &b, &s).unwrap());
        let rhs = moyal(&d(&a), &b, &s).unwrap().add(&moyal(&a, &d(&b), &s).unwrap().scale(&sign_of(&a)));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn filtration_bounds(seed in any::<u64>()) {
        let c = chart_for(seed);
        let s = SymplecticData::standard(c);
        let caps = Caps::new(2, 4);
        let conn = sample_fiber_adapted_connection(&s, seed, SampleBounds { action_degree: 2, magnitude: 2 });
        let mut r = rng(seed);
        let a = section(&mut r, c, caps, 4, false);
        let b = section(&mut r, c, caps, 4, false);
        let deg = |x: &WeylSection| filtration_degree(x).unwrap().map(|d| d as i64);
        let le = |x: Option<i64>, bound: Option<i64>| x.is_none() || (bound.is_some() && x <= bound);
        let (fa, fb) = (deg(&a), deg(&b));
        prop_assert!(le(deg(&supercommutator(&a, &b, &s).unwrap()), fa.zip(fb).map(|(p, q)| p + q - 1)));
        prop_assert!(le(deg(&delta(&a)), fa));
        prop_assert!(le(deg(&delta_inv(&a)), fa));
        prop_assert!(le(deg(&covariant_derivative(&a, &conn, &s).unwrap()), fa));
    }

    #[test]
    fn records_round_trip(seed in any::<u64>()) {
        let c = chart_for(seed);
        let caps = Caps::new(2, 4);
        let mut r = rng(seed);
        let f = coeff(&mut r, c, 3, true);
        prop_assert_eq!(CoeffFn::from_records(c, &f.to_records()).unwrap(), f);
        let a = section(&mut r, c, caps, 5, true);
        prop_assert_eq!(WeylSection::from_records(c, caps, &a.to_records()).unwrap(), a);
    }

    #[test]
    fn leibniz_rule(seed in any::<u64>(), v in 0usize..4) {
        let c = chart_for(seed);
        let v = v % c.dim();
        let mut r = rng(seed);
        let (f, g) = (coeff(&mut r, c, 3, true), coeff(&mut r, c, 3, true));
        prop_assert_eq!((&f * &g).diff(v), &(&f.diff(v) * &g) + &(&f * &g.diff(v)));
    }

    #[test]
    fn normalization_and_primitive(seed in any::<u64>()) {
        let c = chart_for(seed);
        let alpha = closed_fiber_vanishing_form(&mut rng(seed), c, Caps::new(1, 2));
        let beta = fiber_primitive(&alpha).unwrap();
        prop_assert_eq!(beta.d(), alpha.clone());
        let out = normalize_closed_form(&alpha).unwrap();
        prop_assert!(check_normalization(&alpha, &out).unwrap().passed());
    }

    #[test]
    fn operator_series_inverse(seed in any::<u64>()) {
        let c = ChartSpec::new(1, 1).unwrap();
        let mut r = rng(seed);
        let x = DiffOp::derivative(c, &[1, 0], action_poly(&mut r, c, 1))
            .add(&DiffOp::derivative(c, &[0, 2], CoeffFn::constant(c, common::ratio(&mut r))));
        let p = DiffOpSeries::exponential(&x, 3);
        let f = coeff(&mut r, c, 3, false);
        let back = p.inverse().apply_series(&p.apply(&f));
        prop_assert_eq!(&back[0], &f);
        prop_assert!(back[1..].iter().all(CoeffFn::is_zero));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn flat_fedosov_star_is_moyal(seed in any::<u64>()) {
        let c = chart_for(seed);
        let s = SymplecticData::standard(c);
        let caps = Caps::new(3, 6);
        let state = build_gamma(&s, &weylforge::chart_geometry::ConnectionData::zero(c), &s.omega_form(caps), caps).unwrap();
        let moyal = FunctionMoyal::new(&s, 3);
        let mut r = rng(seed);
        let (f, g) = (coeff(&mut r, c, 2, true), coeff(&mut r, c, 2, true));
        prop_assert_eq!(state.star(&f, &g).unwrap(), moyal.star(&f, &g).unwrap());
    }

    #[test]
    fn star_table_is_deterministic(seed in 0u64..1000) {
        let c = ChartSpec::new(1, 1).unwrap();
        let s = SymplecticData::standard(c);
        let caps = Caps::new(1, 2);
        let conn = sample_fiber_adapted_connection(&s, seed, SampleBounds::default());
        let a = star_table(&build_gamma(&s, &conn, &s.omega_form(caps), caps).unwrap(), 2).unwrap();
        let b = star_table(&build_gamma(&s, &conn, &s.omega_form(caps), caps).unwrap(), 2).unwrap();
        prop_assert_eq!(a, b);
    }
}
