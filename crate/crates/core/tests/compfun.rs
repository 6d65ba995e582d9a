use proptest::prelude::*;
use slotlab::compfun::io::{generator_from_json, generator_hash, generator_to_json};
use slotlab::compfun::{
    binomial, cross_slot_residual, derivative_oracle, enumerate_multi_indices, mixed_partial, FdSteps, MultiIndex, Scheme,
    SmoothMap,
};
use slotlab::synthlab::{random_interaction_generator, InteractionSpec};

proptest! {
    #[test]
    fn multi_index_count_is_binomial(dim in 1usize..5, order in 0u32..5) {
        let all = enumerate_multi_indices(dim, order).unwrap();
        prop_assert_eq!(all.len(), binomial(dim + order as usize, order as usize));
        prop_assert!(all.windows(2).all(|w| w[0].order() <= w[1].order()));
        let mut dedup = all.clone();
        dedup.sort_by(|a, b| a.exponents().cmp(b.exponents()));
        dedup.dedup();
        prop_assert_eq!(dedup.len(), all.len());
    }

    #[test]
    fn monomial_of_a_sum_index_is_a_product(
        a in proptest::collection::vec(0u32..3, 3),
        b in proptest::collection::vec(0u32..3, 3),
        z in proptest::collection::vec(-2.0f64..2.0, 3),
    ) {
        let (ma, mb) = (MultiIndex::new(a), MultiIndex::new(b));
        let sum = ma.add(&mb).unwrap();
        let lhs = sum.eval(&z).unwrap();
        let rhs = ma.eval(&z).unwrap() * mb.eval(&z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn analytic_and_finite_difference_derivatives_agree() {
    let g = random_interaction_generator(&InteractionSpec::default(), 3).unwrap();
    let z = [0.3, -0.4];
    // The slot nets are steep, so the default higher-order step leaves
    // O(h²) truncation near 1e-4.
    let steps = FdSteps { first: 1e-5, higher: 2e-4 };
    let a = derivative_oracle(&g, &z, 3, Scheme::Analytic, &steps).unwrap();
    let f = derivative_oracle(&g, &z, 3, Scheme::CentralDifference, &steps).unwrap();
    assert!((&a.jacobian - &f.jacobian).abs().max() < 1e-6);
    for (ha, hf) in a.hessians.unwrap().iter().zip(f.hessians.unwrap().iter()) {
        assert!((ha - hf).abs().max() < 1e-4, "{}", (ha - hf).abs().max());
    }
    for (ta, tf) in a.third.unwrap().iter().zip(f.third.unwrap().iter()) {
        assert!(ta.iter().zip(tf).all(|(x, y)| (x - y).abs() < 1e-3));
    }
}

#[test]
fn degree_two_generator_has_vanishing_third_order_cross_partials() {
    let g = random_interaction_generator(&InteractionSpec::default(), 5).unwrap();
    let r = cross_slot_residual(&g, &g.slots(), &[0.1, 0.7], 2, Scheme::Analytic, &FdSteps::default()).unwrap();
    assert_eq!(r.order, 3);
    assert!(r.value() < 1e-12, "{r:?}");
    // The second-order cross partial is the interaction coefficient itself.
    let d = mixed_partial(&g, &[0.1, 0.7], &[0, 1], Scheme::Analytic, &FdSteps::default()).unwrap();
    let cross = MultiIndex::new(vec![1, 1]);
    let coeff = &g.interaction().iter().find(|t| t.alpha == cross).unwrap().coeff;
    assert!(d.iter().zip(coeff).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn generator_json_roundtrip_preserves_hash_and_values() {
    let g = random_interaction_generator(&InteractionSpec::default(), 9).unwrap();
    let back = generator_from_json(&generator_to_json(&g).unwrap()).unwrap();
    assert_eq!(generator_hash(&g).unwrap(), generator_hash(&back).unwrap());
    assert_eq!(g.eval(&[0.2, 0.9]), back.eval(&[0.2, 0.9]));
}

#[test]
fn foreign_json_is_rejected() {
    assert!(generator_from_json(r#"{"format":"other","version":1,"generator":{}}"#).is_err());
}
