use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::compfun::generator::SlotStructure;
use crate::error::{Error, Result};
use crate::learnkit::decoder::Decoder;
use crate::learnkit::network::Network;
use crate::learnkit::optim::{cosine_lr, Adam, AdamConfig};
use crate::learnkit::tape::Tape;
use crate::linalg::Mat;
use crate::rng;

/// Recombines slot values drawn independently from per-slot pools of inferred
/// in-domain latents.
#[derive(Clone, Debug, PartialEq)]
pub struct RecombinationSampler {
    slots: SlotStructure,
    /// `pools[k]` is `P x m`.
    pools: Vec<Mat>,
    seed: u64,
}

impl RecombinationSampler {
    /// Pools every slot of the rows of `z` (`N x d_z`).
    pub fn from_latents(slots: SlotStructure, z: &Mat, seed: u64) -> Result<Self> {
        if z.ncols() != slots.latent_dim() || z.nrows() == 0 {
            return Err(Error::Dimension { context: "recombination pool", expected: slots.latent_dim(), got: z.ncols() });
        }
        let pools = (0..slots.slots()).map(|k| z.columns(slots.range(k).start, slots.slot_dim()).into_owned()).collect();
        Ok(RecombinationSampler { slots, pools, seed })
    }

    pub fn pools(&self) -> &[Mat] {
        &self.pools
    }

    /// Batch `draw`: row `i` uses the stream `(mix(seed, draw), i)`.
    pub fn sample(&self, draw: u64, rows: usize) -> Mat {
        let m = self.slots.slot_dim();
        let mut out = Mat::zeros(rows, self.slots.latent_dim());
        let base = rng::mix(self.seed, draw);
        for i in 0..rows {
            let mut r = rng::stream(base, i as u64);
            for (k, pool) in self.pools.iter().enumerate() {
                let j = r.random_range(0..pool.nrows());
                out.view_mut((i, k * m), (1, m)).copy_from(&pool.row(j));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_floor: f64,
    pub adam: AdamConfig,
    /// Size of the fixed recombination set used to report held-out loss.
    pub holdout: usize,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { steps: 3000, batch: 64, lr: 5e-4, lr_floor: 0.1, adam: AdamConfig::default(), holdout: 256, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    /// Training loss per step.
    pub loss: Vec<f64>,
    pub holdout_start: f64,
    pub holdout_end: f64,
}

impl ReplayLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss"])?;
        for (s, l) in self.loss.iter().enumerate() {
            out.write_record([s.to_string(), l.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `mean ‖ẑ − enc(dec(ẑ))‖²` over the rows of `z`.
pub fn replay_loss(dec: &Decoder, enc: &Network, z: &Mat) -> f64 {
    (enc.forward_batch(&dec.forward_batch(z)) - z).norm_squared() / z.nrows() as f64
}

/// Trains the encoder to invert the frozen decoder on fresh recombinations
/// each step. The decoder is only read.
pub fn replay_train(dec: &Decoder, enc: &mut Network, sampler: &RecombinationSampler, cfg: &ReplayConfig) -> Result<ReplayLog> {
    if cfg.steps == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) || !(0.0..=1.0).contains(&cfg.lr_floor) {
        return Err(Error::Config("replay needs positive steps, batch and rate, lr_floor in [0, 1]".into()));
    }
    if enc.input_dim() != dec.output_dim() || enc.output_dim() != dec.latent_dim() {
        return Err(Error::Dimension { context: "replay encoder", expected: dec.latent_dim(), got: enc.output_dim() });
    }
    let holdout = sampler.sample(u64::MAX, cfg.holdout.max(1));
    let mut log = ReplayLog { holdout_start: replay_loss(dec, enc, &holdout), ..Default::default() };
    let mut opt = Adam::for_params(&enc.params(), cfg.adam);
    for step in 0..cfg.steps {
        let zb = sampler.sample(rng::mix(cfg.seed, step as u64), cfg.batch);
        let xb = dec.forward_batch(&zb);
        let tape = Tape::new();
        let pe = enc.tape_params(&tape);
        let zhat = enc.forward_tape(tape.constant(xb), &pe);
        let loss = (zhat - tape.constant(zb)).square().sum().scale(1.0 / cfg.batch as f64);
        let value = loss.scalar();
        if !value.is_finite() || value > 1e6 {
            return Err(Error::Divergence { step, loss: value });
        }
        log.loss.push(value);
        let g = tape.backward(loss);
        let grads: Vec<Mat> = pe.iter().map(|&p| g.get(p)).collect();
        opt.step(enc.params_mut(), &grads, cosine_lr(cfg.lr, cfg.lr_floor, step, cfg.steps));
    }
    log.holdout_end = replay_loss(dec, enc, &holdout);
    Ok(log)
}
