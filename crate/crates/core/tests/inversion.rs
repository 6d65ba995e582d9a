use rand::Rng as _;
use slotlab::compfun::SlotStructure;
use slotlab::inversion::{
    replay_train, residuals, search_invert, RecombinationSampler, ReplayConfig, SearchConfig,
};
use slotlab::learnkit::{Activation, Checkpoint, Decoder, Network, SlotwiseDecoder};
use slotlab::linalg::{self, Mat};
use slotlab::rng;

fn slotwise(seed: u64) -> Decoder {
    let s = SlotStructure::new(2, 1).unwrap();
    let mut d = SlotwiseDecoder::new(s, 2, &[16], 6, Activation::Tanh, seed).unwrap();
    let mut r = rng::stream(seed, 99);
    d.coefficients_mut().iter_mut().for_each(|c| *c = r.random_range(-0.5..0.5));
    Decoder::Slotwise(d)
}

fn random_rows(n: usize, d: usize, seed: u64) -> Mat {
    let mut r = rng::stream(seed, 0);
    Mat::from_fn(n, d, |_, _| r.random_range(-1.0..1.0))
}

#[test]
fn exact_start_stays_put() {
    let dec = slotwise(1);
    let z0 = random_rows(5, 2, 2);
    let x = dec.forward_batch(&z0);
    let res = search_invert(&dec, &x, &z0, &SearchConfig::default(), None).unwrap();
    assert_eq!(res.z, z0);
    assert!(res.best_residual.iter().all(|&r| r == 0.0));
}

#[test]
fn linear_decoder_reaches_least_squares() {
    let net = Network::new(&[3, 7], Activation::Tanh, 4).unwrap();
    let a = net.layers()[0].weight.transpose();
    let b = net.layers()[0].bias.transpose();
    let dec = Decoder::Dense(net);
    let x = random_rows(4, 7, 5);
    let z0 = Mat::zeros(4, 3);
    let cfg = SearchConfig { steps: 4000, lr: 2e-2, lr_floor: 1e-3, ..Default::default() };
    let res = search_invert(&dec, &x, &z0, &cfg, None).unwrap();
    let pinv = linalg::pinv(&a, 1e-12);
    for i in 0..4 {
        let want = &pinv * (x.row(i).transpose() - &b);
        for j in 0..3 {
            assert!((res.z[(i, j)] - want[j]).abs() < 1e-6, "{} vs {}", res.z[(i, j)], want[j]);
        }
    }
}

#[test]
fn best_iterate_never_worse_and_permutation_invariant() {
    let dec = slotwise(7);
    let truth = random_rows(20, 2, 8);
    let x = dec.forward_batch(&truth);
    let z0 = &truth + random_rows(20, 2, 9) * 0.5;
    // A rate this large makes Adam overshoot, so the bookkeeping matters.
    let cfg = SearchConfig { steps: 200, lr: 0.3, ..Default::default() };
    let res = search_invert(&dec, &x, &z0, &cfg, None).unwrap();
    for (b, i) in res.best_residual.iter().zip(&res.initial_residual) {
        assert!(b <= i);
    }
    assert_eq!(residuals(&dec, &x, &res.z), res.best_residual);

    let perm = [3, 0, 5, 1, 4, 2];
    let mut pdec = dec.clone();
    pdec.permute_outputs(&perm);
    let px = Mat::from_fn(x.nrows(), 6, |i, j| x[(i, perm[j])]);
    let pres = search_invert(&pdec, &px, &z0, &cfg, None).unwrap();
    for (a, b) in res.best_residual.iter().zip(&pres.best_residual) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn zero_entropy_weight_is_pure_reconstruction() {
    let dec = slotwise(3);
    let x = dec.forward_batch(&random_rows(6, 2, 1));
    let z0 = Mat::zeros(6, 2);
    let feats = vec![random_rows(30, 1, 2), random_rows(30, 1, 3)];
    let labels: Vec<Vec<usize>> = feats.iter().map(|f| f.iter().map(|&v| usize::from(v > 0.0)).collect()).collect();
    let ro = slotlab::learnkit::train_shared_readout(&feats, &labels, 2, &Default::default()).unwrap();
    let cfg = SearchConfig { steps: 50, lr: 1e-2, ..Default::default() };
    let a = search_invert(&dec, &x, &z0, &cfg, None).unwrap();
    let b = search_invert(&dec, &x, &z0, &cfg, Some(&ro)).unwrap();
    assert_eq!(a, b);
    let ent = SearchConfig { entropy_weight: 10.0, ..cfg.clone() };
    assert!(search_invert(&dec, &x, &z0, &ent, None).is_err());
    let c = search_invert(&dec, &x, &z0, &ent, Some(&ro)).unwrap();
    assert_ne!(a.z, c.z);
}

#[test]
fn sampler_draws_from_pools() {
    let s = SlotStructure::new(3, 2).unwrap();
    let z = random_rows(40, 6, 4);
    let sampler = RecombinationSampler::from_latents(s, &z, 1).unwrap();
    let batch = sampler.sample(0, 100);
    for i in 0..100 {
        for k in 0..3 {
            let v = batch.view((i, 2 * k), (1, 2));
            assert!((0..40).any(|j| sampler.pools()[k].row(j) == v.row(0)));
        }
    }
    assert_eq!(batch, sampler.sample(0, 100));
}

#[test]
fn replay_recovers_identity_encoder() {
    let d = 3;
    let ident = slotlab::learnkit::network::Dense { weight: Mat::identity(d, d), bias: Mat::zeros(1, d) };
    let dec = Decoder::Dense(Network::from_layers(vec![ident], Activation::Tanh).unwrap());
    let before = Checkpoint { encoder: None, decoder: Some(dec.clone()) }.checksum().unwrap();
    let mut enc = Network::new(&[d, d], Activation::Tanh, 2).unwrap();
    let sampler = RecombinationSampler::from_latents(SlotStructure::new(3, 1).unwrap(), &random_rows(200, d, 6), 3).unwrap();
    let cfg = ReplayConfig { steps: 3000, lr: 1e-2, lr_floor: 0.0, ..Default::default() };
    let log = replay_train(&dec, &mut enc, &sampler, &cfg).unwrap();
    let w = &enc.layers()[0].weight;
    assert!(linalg::max_abs(&(w - Mat::identity(d, d))) < 1e-4, "{w}");
    assert!(linalg::max_abs(&enc.layers()[0].bias) < 1e-4);
    assert!(log.holdout_end < log.holdout_start);
    assert_eq!(Checkpoint { encoder: None, decoder: Some(dec) }.checksum().unwrap(), before);
}

#[test]
fn replay_lowers_holdout_loss_on_slotwise_decoder() {
    let dec = slotwise(5);
    let mut enc = Network::new(&[6, 16, 2], Activation::Tanh, 1).unwrap();
    let sampler = RecombinationSampler::from_latents(SlotStructure::new(2, 1).unwrap(), &random_rows(100, 2, 7), 0).unwrap();
    let cfg = ReplayConfig { steps: 300, lr: 5e-3, ..Default::default() };
    let a = replay_train(&dec, &mut enc.clone(), &sampler, &cfg).unwrap();
    let b = replay_train(&dec, &mut enc, &sampler, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.holdout_end < 0.5 * a.holdout_start);
}
