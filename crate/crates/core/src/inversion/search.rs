use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learnkit::decoder::Decoder;
use crate::learnkit::optim::{cosine_lr, Adam, AdamConfig};
use crate::learnkit::readout::SharedReadout;
use crate::learnkit::tape::Tape;
use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub steps: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` under cosine decay.
    pub lr_floor: f64,
    pub adam: AdamConfig,
    /// A point stops moving once its residual is at or below this.
    pub threshold: f64,
    /// Weight of the readout-entropy term; needs an attached readout when positive.
    pub entropy_weight: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { steps: 500, lr: 1e-3, lr_floor: 1.0, adam: AdamConfig::default(), threshold: 0.0, entropy_weight: 0.0 }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.lr > 0.0) || !(self.threshold >= 0.0) || !self.entropy_weight.is_finite() {
            return Err(Error::Config("search needs positive steps and rate, threshold ≥ 0, finite entropy weight".into()));
        }
        if !(0.0..=1.0).contains(&self.lr_floor) {
            return Err(Error::Config("search lr_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of a batched search; row `i` of every matrix belongs to point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Best iterate per point.
    pub z: Mat,
    pub initial_residual: Vec<f64>,
    pub best_residual: Vec<f64>,
    /// `trace[step][i]`: residual of point `i` before update `step`.
    pub trace: Vec<Vec<f64>>,
    /// Set when a non-finite loss stopped the search early.
    pub warning: Option<String>,
}

impl SearchResult {
    /// `point,step,residual` rows.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["point", "step", "residual"])?;
        for i in 0..self.z.nrows() {
            for (step, row) in self.trace.iter().enumerate() {
                out.write_record([i.to_string(), step.to_string(), row[i].to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Squared reconstruction residual `‖x_i − f̂(z_i)‖²` per row.
pub fn residuals(dec: &Decoder, x: &Mat, z: &Mat) -> Vec<f64> {
    let r = dec.forward_batch(z) - x;
    (0..r.nrows()).map(|i| r.row(i).norm_squared()).collect()
}

/// Minimises `‖x − f̂(ẑ)‖²` (plus the weighted entropy of the shared readout's
/// slot predictions) over `ẑ` for every row of `x` independently, starting at
/// `z0`, with Adam. Each point keeps its best iterate by reconstruction
/// residual, so the result never does worse than `z0`.
pub fn search_invert(
    dec: &Decoder,
    x: &Mat,
    z0: &Mat,
    cfg: &SearchConfig,
    readout: Option<&SharedReadout>,
) -> Result<SearchResult> {
    cfg.validate()?;
    let (n, d) = (x.nrows(), dec.latent_dim());
    if z0.shape() != (n, d) || x.ncols() != dec.output_dim() {
        return Err(Error::Dimension { context: "search start", expected: d, got: z0.ncols() });
    }
    let entropy = match (cfg.entropy_weight > 0.0, readout) {
        (false, _) => None,
        (true, None) => return Err(Error::Config("entropy term requires an attached readout".into())),
        (true, Some(r)) => {
            if d % r.input_dim() != 0 {
                return Err(Error::Dimension { context: "readout slot width", expected: r.input_dim(), got: d });
            }
            Some(r)
        }
    };
    let mut z = z0.clone();
    let mut best = z0.clone();
    let initial = residuals(dec, x, z0);
    let mut best_res = initial.clone();
    let mut frozen: Vec<bool> = initial.iter().map(|&r| r <= cfg.threshold).collect();
    let mut opt = Adam::new(&[(n, d)], cfg.adam);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut warning = None;
    for step in 0..cfg.steps {
        if frozen.iter().all(|&f| f) {
            break;
        }
        let tape = Tape::new();
        let params = dec.tape_constants(&tape);
        let zv = tape.param(z.clone());
        let per_row = (dec.forward_tape(zv, &params) - tape.constant(x.clone())).square().sum_rows();
        // Bookkeeping uses the plain forward pass so reported residuals can be
        // reproduced bit for bit with `residuals`.
        let res = residuals(dec, x, &z);
        let mut loss = per_row.sum();
        if let Some(ro) = entropy {
            let m = ro.input_dim();
            let (w, b) = (tape.constant(ro.weight().clone()), tape.constant(ro.bias().clone()));
            for k in 0..d / m {
                let ls = zv.columns(k * m, m).matmul(w).add_row(b).log_softmax_rows();
                loss = loss + (ls.exp() * ls).sum().scale(-cfg.entropy_weight);
            }
        }
        if !loss.scalar().is_finite() || res.iter().any(|r| !r.is_finite()) {
            warning = Some(format!("non-finite loss at step {step}; returning best iterates"));
            break;
        }
        for i in 0..n {
            if res[i] < best_res[i] {
                best_res[i] = res[i];
                best.row_mut(i).copy_from(&z.row(i));
            }
            frozen[i] |= res[i] <= cfg.threshold;
        }
        trace.push(res);
        let g = tape.backward(loss).get(zv);
        let before = z.clone();
        opt.step(vec![&mut z], &[g], cosine_lr(cfg.lr, cfg.lr_floor, step, cfg.steps));
        for i in (0..n).filter(|&i| frozen[i]) {
            z.row_mut(i).copy_from(&before.row(i));
        }
    }
    if warning.is_none() {
        for (i, r) in residuals(dec, x, &z).into_iter().enumerate() {
            if r < best_res[i] {
                best_res[i] = r;
                best.row_mut(i).copy_from(&z.row(i));
            }
        }
    }
    Ok(SearchResult { z: best, initial_residual: initial, best_residual: best_res, trace, warning })
}
