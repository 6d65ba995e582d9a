use proptest::prelude::*;
use slotlab::compfun::SmoothMap;
use slotlab::linalg::Mat;
use slotlab::rng;
use slotlab::synthlab::{random_interaction_generator, InteractionSpec};
use slotlab::theory::battery::random_matrix;
use slotlab::theory::{
    check_preconditions, moore_penrose_check, newton_left_inverse, polarization_check, NewtonConfig, Suite, TheoryConfig,
    Verdict,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_right_inverse_is_a_projected_pseudoinverse(seed in 0u64..10_000, d1 in 1usize..4, extra in 1usize..5) {
        let d2 = d1 + extra;
        let mut r = rng::stream(seed, 0);
        let a = random_matrix(&mut r, d1, d2);
        let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
        let null = Mat::identity(d2, d2) - &pinv * &a;
        let b = &pinv + null * random_matrix(&mut r, d2, d1);
        let cert = moore_penrose_check(&a, &b, 1e-8).unwrap();
        prop_assert_eq!(cert.verdict, Verdict::Pass);
    }

    #[test]
    fn polarization_holds_for_linear_forms(
        forms in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..5),
        point in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let cert = polarization_check(&forms, &[point], 1e-10).unwrap();
        prop_assert_eq!(cert.verdict, Verdict::Pass);
    }
}

#[test]
fn a_non_inverse_is_rejected() {
    let mut r = rng::stream(1, 0);
    let a = random_matrix(&mut r, 2, 5);
    let b = random_matrix(&mut r, 5, 2);
    assert!(matches!(moore_penrose_check(&a, &b, 1e-8), Err(slotlab::Error::Precondition(_))));
}

#[test]
fn newton_recovers_the_latent() {
    let g = random_interaction_generator(&InteractionSpec::default(), 2).unwrap();
    let z = [0.35, -0.6];
    let x = g.eval(&z);
    let res = newton_left_inverse(&g, &x, &[0.3, -0.5], &NewtonConfig::default()).unwrap();
    assert!(res.residual < 1e-20, "{res:?}");
    assert!(res.z.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn cubic_dimension_is_enforced_only_where_needed() {
    let cfg = TheoryConfig { d_z: 2, d_x: 7, ..TheoryConfig::default() };
    assert!(check_preconditions(&[Suite::ConstructM], &cfg).is_err());
    assert!(check_preconditions(&[Suite::Counterexample], &cfg).is_err());
    assert!(check_preconditions(&[Suite::Moore, Suite::Polarization], &cfg).is_ok());
    let relaxed = TheoryConfig { allow_below_cubic: true, ..cfg };
    assert!(check_preconditions(&[Suite::ConstructM], &relaxed).is_ok());
}

#[test]
fn selectors_expand() {
    assert_eq!(Suite::parse_selector("all").unwrap().len(), Suite::ALL.len());
    assert_eq!(Suite::parse_selector("moore").unwrap(), vec![Suite::Moore]);
    assert!(Suite::parse_selector("nope").is_err());
}
