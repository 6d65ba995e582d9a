use proptest::prelude::*;
use rand::Rng as _;
use slotlab::compfun::{binomial, SlotStructure};
use slotlab::learnkit::{
    cosine_lr, gradient_relative_error, table_indices, Activation, Checkpoint, Decoder, InteractionTable, Network,
    SlotwiseDecoder, Tape,
};
use slotlab::linalg::Mat;
use slotlab::rng;

fn cross_decoder(seed: u64) -> Decoder {
    let s = SlotStructure::new(2, 1).unwrap();
    let mut d =
        SlotwiseDecoder::new(s, 2, &[6], 5, Activation::Tanh, seed).unwrap().with_table(InteractionTable::Cross).unwrap();
    let mut r = rng::stream(seed, 1);
    d.coefficients_mut().iter_mut().for_each(|c| *c = r.random_range(-1.0..1.0));
    Decoder::Slotwise(d)
}

/// `0.5 ‖dec(z)‖²` summed over rows.
fn energy(dec: &Decoder, z: &Mat) -> f64 {
    0.5 * dec.forward_batch(z).iter().map(|v| v * v).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn network_gradients_match_differences(seed in 0u64..1000, width in 2usize..8) {
        let net = Network::new(&[3, width, 2], Activation::Tanh, seed).unwrap();
        let mut r = rng::stream(seed, 5);
        let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let e = gradient_relative_error(&net, &x, &[0.4, -1.1], 1e-5).unwrap();
        prop_assert!(e < 1e-6, "relative error {}", e);
    }
}

#[test]
fn cross_table_keeps_only_coupling_monomials() {
    let s = SlotStructure::new(2, 1).unwrap();
    let cross = table_indices(s, 2, InteractionTable::Cross).unwrap();
    assert_eq!(cross.len(), 1);
    assert_eq!(cross[0].exponents(), &[1, 1]);
    let s3 = SlotStructure::new(3, 2).unwrap();
    assert_eq!(table_indices(s3, 3, InteractionTable::Full).unwrap().len(), binomial(9, 3));
    // Monomials of order ≤ 3 inside one slot of dimension 2: 10 per slot, the
    // constant shared.
    assert_eq!(table_indices(s3, 3, InteractionTable::Cross).unwrap().len(), binomial(9, 3) - (3 * 9 + 1));
}

#[test]
fn decoder_tape_gradients_match_differences() {
    let dec = cross_decoder(3);
    let mut r = rng::stream(3, 2);
    let z = Mat::from_fn(4, 2, |_, _| r.random_range(-1.0..1.0));

    let tape = Tape::new();
    let zv = tape.param(z.clone());
    let params = dec.tape_params(&tape);
    let out = dec.forward_tape(zv, &params).square().sum().scale(0.5);
    assert!((out.scalar() - energy(&dec, &z)).abs() < 1e-12);
    let g = tape.backward(out);

    let h = 1e-6;
    let gz = g.get(zv);
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let (mut up, mut down) = (z.clone(), z.clone());
            up[(i, j)] += h;
            down[(i, j)] -= h;
            let fd = (energy(&dec, &up) - energy(&dec, &down)) / (2.0 * h);
            assert!((fd - gz[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()), "z[{i},{j}]: {fd} vs {}", gz[(i, j)]);
        }
    }
    for (p, pv) in params.iter().enumerate() {
        let gp = g.get(*pv);
        for k in 0..gp.len() {
            let mut up = dec.clone();
            up.params_mut()[p][k] += h;
            let mut down = dec.clone();
            down.params_mut()[p][k] -= h;
            let fd = (energy(&up, &z) - energy(&down, &z)) / (2.0 * h);
            assert!((fd - gp[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {p}[{k}]: {fd} vs {}", gp[k]);
        }
    }
}

#[test]
fn checkpoint_roundtrip_keeps_the_interaction_table() {
    let ck = Checkpoint { encoder: Some(Network::new(&[5, 7, 2], Activation::Tanh, 1).unwrap()), decoder: Some(cross_decoder(2)) };
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.checksum().unwrap(), ck.checksum().unwrap());
    match back.decoder.unwrap() {
        Decoder::Slotwise(d) => assert_eq!(d.table(), InteractionTable::Cross),
        Decoder::Dense(_) => panic!("decoder kind changed"),
    }
    let bytes = ck.to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(Checkpoint::from_bytes(&bytes[1..]).is_err());
}

#[test]
fn cosine_schedule_runs_from_base_to_floor() {
    assert_eq!(cosine_lr(1e-3, 0.1, 0, 100), 1e-3);
    assert!((cosine_lr(1e-3, 0.1, 99, 100) - 1e-4).abs() < 1e-18);
    let mid = cosine_lr(1.0, 0.0, 50, 101);
    assert!((mid - 0.5).abs() < 1e-12);
}
