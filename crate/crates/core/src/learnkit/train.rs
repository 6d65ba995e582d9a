use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::decoder::Decoder;
use super::network::Network;
use super::optim::{cosine_lr, Adam, AdamConfig};
use super::penalty::{hessian_penalty_tape, PenaltyNorm};
use super::tape::Tape;
use crate::compfun::generator::SlotStructure;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` under cosine decay; 1 keeps it constant.
    pub lr_floor: f64,
    pub adam: AdamConfig,
    pub penalty_weight: f64,
    pub penalty_step: f64,
    pub penalty_norm: PenaltyNorm,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch: 64,
            lr: 1e-3,
            lr_floor: 0.1,
            adam: AdamConfig::default(),
            penalty_weight: 0.0,
            penalty_step: 1e-2,
            penalty_norm: PenaltyNorm::Frobenius,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub step: usize,
    pub recon: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub entries: Vec<LossEntry>,
}

/// Row indices of the minibatch drawn at `step`.
pub fn batch_indices(seed: u64, step: usize, n: usize, batch: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, step as u64);
    (0..batch.min(n).max(1)).map(|_| r.random_range(0..n)).collect()
}

pub fn gather_rows(x: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

fn validate(cfg: &TrainConfig, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch == 0 || cfg.lr <= 0.0 || !(0.0..=1.0).contains(&cfg.lr_floor) {
        return Err(Error::Config("batch size and learning rate must be positive, lr_floor in [0, 1]".into()));
    }
    Ok(())
}

/// Mean squared reconstruction error per record.
pub fn reconstruction_mse(enc: &Network, dec: &Decoder, x: &Mat) -> f64 {
    let r = dec.forward_batch(&enc.forward_batch(x)) - x;
    r.norm_squared() / x.nrows() as f64
}

/// Minimises `mean ‖x − f̂(ĝ(x))‖² + λ R(f̂, ĝ(x))` with Adam.
pub fn train_autoencoder(
    enc: &mut Network,
    dec: &mut Decoder,
    x: &Mat,
    slots: &SlotStructure,
    cfg: &TrainConfig,
) -> Result<LossLog> {
    validate(cfg, x.nrows())?;
    if enc.input_dim() != x.ncols() || dec.output_dim() != x.ncols() {
        return Err(Error::Dimension { context: "autoencoder observation", expected: x.ncols(), got: dec.output_dim() });
    }
    if enc.output_dim() != dec.latent_dim() || dec.latent_dim() != slots.latent_dim() {
        return Err(Error::Dimension { context: "autoencoder latent", expected: slots.latent_dim(), got: enc.output_dim() });
    }
    let n_enc = enc.params().len();
    let mut shapes: Vec<_> = enc.params().iter().map(|p| p.shape()).collect();
    shapes.extend(dec.params().iter().map(|p| p.shape()));
    let mut opt = Adam::new(&shapes, cfg.adam);
    let mut log = LossLog::default();
    for step in 0..cfg.steps {
        let xb = gather_rows(x, &batch_indices(cfg.seed, step, x.nrows(), cfg.batch));
        let tape = Tape::new();
        let pe = enc.tape_params(&tape);
        let pd = dec.tape_params(&tape);
        let xv = tape.constant(xb.clone());
        let z = enc.forward_tape(xv, &pe);
        let recon = (dec.forward_tape(z, &pd) - xv).square().sum().scale(1.0 / xb.nrows() as f64);
        let (loss, penalty) = if cfg.penalty_weight > 0.0 {
            let zv = z.value().clone();
            let p = hessian_penalty_tape(dec, slots, &zv, &pd, cfg.penalty_step, cfg.penalty_norm, &tape);
            (recon + p.scale(cfg.penalty_weight), p.scalar())
        } else {
            (recon, 0.0)
        };
        let total = loss.scalar();
        if !total.is_finite() {
            return Err(Error::Divergence { step, loss: total });
        }
        log.entries.push(LossEntry { step, recon: recon.scalar(), penalty, total });
        let g = tape.backward(loss);
        let grads: Vec<Mat> = pe.iter().chain(&pd).map(|&p| g.get(p)).collect();
        let lr = cosine_lr(cfg.lr, cfg.lr_floor, step, cfg.steps);
        let mut params = enc.params_mut();
        params.extend(dec.params_mut());
        debug_assert_eq!(params.len(), n_enc + pd.len());
        opt.step(params, &grads, lr);
    }
    Ok(log)
}

/// Supervised regression `mean ‖y − net(x)‖²` with Adam.
pub fn train_regressor(net: &mut Network, x: &Mat, y: &Mat, cfg: &TrainConfig) -> Result<LossLog> {
    validate(cfg, x.nrows())?;
    if x.nrows() != y.nrows() || net.input_dim() != x.ncols() || net.output_dim() != y.ncols() {
        return Err(Error::Dimension { context: "regression data", expected: net.output_dim(), got: y.ncols() });
    }
    let mut opt = Adam::for_params(&net.params(), cfg.adam);
    let mut log = LossLog::default();
    for step in 0..cfg.steps {
        let idx = batch_indices(cfg.seed, step, x.nrows(), cfg.batch);
        let (xb, yb) = (gather_rows(x, &idx), gather_rows(y, &idx));
        let tape = Tape::new();
        let p = net.tape_params(&tape);
        let out = net.forward_tape(tape.constant(xb), &p);
        let loss = (out - tape.constant(yb)).square().sum().scale(1.0 / idx.len() as f64);
        let total = loss.scalar();
        if !total.is_finite() {
            return Err(Error::Divergence { step, loss: total });
        }
        log.entries.push(LossEntry { step, recon: total, penalty: 0.0, total });
        let g = tape.backward(loss);
        let grads: Vec<Mat> = p.iter().map(|&v| g.get(v)).collect();
        opt.step(net.params_mut(), &grads, cosine_lr(cfg.lr, cfg.lr_floor, step, cfg.steps));
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learnkit::decoder::SlotwiseDecoder;
    use crate::learnkit::network::Activation;

    fn setup() -> (Network, Decoder, Mat, SlotStructure) {
        let slots = SlotStructure::new(2, 1).unwrap();
        let enc = Network::new(&[3, 8, 2], Activation::Tanh, 1).unwrap();
        let dec = Decoder::Slotwise(SlotwiseDecoder::new(slots, 1, &[8], 3, Activation::Tanh, 2).unwrap());
        let x = Mat::from_fn(50, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.5);
        (enc, dec, x, slots)
    }

    #[test]
    fn first_logged_loss_is_initial_batch_loss() {
        let (mut enc, mut dec, x, slots) = setup();
        let cfg = TrainConfig { steps: 3, batch: 8, seed: 5, ..TrainConfig::default() };
        let xb = gather_rows(&x, &batch_indices(5, 0, x.nrows(), 8));
        let expected = reconstruction_mse(&enc, &dec, &xb);
        let log = train_autoencoder(&mut enc, &mut dec, &x, &slots, &cfg).unwrap();
        assert!((log.entries[0].recon - expected).abs() < 1e-12);
    }

    #[test]
    fn training_reduces_loss() {
        let (mut enc, mut dec, x, slots) = setup();
        let before = reconstruction_mse(&enc, &dec, &x);
        let cfg = TrainConfig { steps: 300, batch: 16, lr: 1e-2, seed: 5, ..TrainConfig::default() };
        train_autoencoder(&mut enc, &mut dec, &x, &slots, &cfg).unwrap();
        assert!(reconstruction_mse(&enc, &dec, &x) < 0.5 * before);
    }

    #[test]
    fn penalised_training_runs() {
        let (mut enc, _, x, slots) = setup();
        let mut dec = Decoder::Dense(Network::new(&[2, 8, 3], Activation::Tanh, 3).unwrap());
        let cfg = TrainConfig { steps: 5, batch: 8, penalty_weight: 0.1, ..TrainConfig::default() };
        let log = train_autoencoder(&mut enc, &mut dec, &x, &slots, &cfg).unwrap();
        assert!(log.entries.iter().all(|e| e.penalty > 0.0));
    }
}
