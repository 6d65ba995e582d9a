use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::linalg::{serde_mat, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadoutConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig { steps: 1500, lr: 0.05 }
    }
}

/// Softmax classifier `ℝ^m → classes` shared by every slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedReadout {
    #[serde(with = "serde_mat")]
    weight: Mat,
    #[serde(with = "serde_mat")]
    bias: Mat,
}

impl SharedReadout {
    pub fn classes(&self) -> usize {
        self.weight.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Mat {
        &self.weight
    }

    pub fn bias(&self) -> &Mat {
        &self.bias
    }

    pub fn logits(&self, x: &Mat) -> Mat {
        let mut l = x * &self.weight;
        for j in 0..l.ncols() {
            l.column_mut(j).add_scalar_mut(self.bias[(0, j)]);
        }
        l
    }

    /// Arg-max class per row; ties resolve to the lowest class.
    pub fn predict(&self, x: &Mat) -> Vec<usize> {
        let l = self.logits(x);
        (0..l.nrows())
            .map(|r| {
                let row = l.row(r);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Fraction of (slot, record) pairs classified correctly.
    pub fn accuracy(&self, features: &[Mat], labels: &[Vec<usize>]) -> f64 {
        let mut hit = 0usize;
        let mut total = 0usize;
        for (f, l) in features.iter().zip(labels) {
            for (p, y) in self.predict(f).into_iter().zip(l) {
                hit += usize::from(p == *y);
                total += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// Fits one softmax readout on the features of every slot, by full-batch Adam
/// on the mean cross-entropy. `features[k]` is `N x m`, `labels[k]` has `N` entries.
pub fn train_shared_readout(
    features: &[Mat],
    labels: &[Vec<usize>],
    classes: usize,
    cfg: &ReadoutConfig,
) -> Result<SharedReadout> {
    if features.is_empty() || features.len() != labels.len() || classes == 0 {
        return Err(Error::Config("readout needs one label vector per slot and at least one class".into()));
    }
    let m = features[0].ncols();
    let rows: usize = features.iter().map(|f| f.nrows()).sum();
    let mut x = Mat::zeros(rows, m);
    let mut onehot = Mat::zeros(rows, classes);
    let mut at = 0;
    for (f, l) in features.iter().zip(labels) {
        if f.ncols() != m || f.nrows() != l.len() {
            return Err(Error::Dimension { context: "readout features", expected: l.len(), got: f.nrows() });
        }
        x.rows_mut(at, f.nrows()).copy_from(f);
        for (i, &y) in l.iter().enumerate() {
            if y >= classes {
                return Err(Error::Config(format!("label {y} out of range for {classes} classes")));
            }
            onehot[(at + i, y)] = 1.0;
        }
        at += f.nrows();
    }
    let mut ro = SharedReadout { weight: Mat::zeros(m, classes), bias: Mat::zeros(1, classes) };
    if rows == 0 {
        return Ok(ro);
    }
    let mut opt = Adam::new(&[(m, classes), (1, classes)], AdamConfig::default());
    for _ in 0..cfg.steps {
        let tape = Tape::new();
        let w = tape.param(ro.weight.clone());
        let b = tape.param(ro.bias.clone());
        let ls = tape.constant(x.clone()).matmul(w).add_row(b).log_softmax_rows();
        let loss = (ls * tape.constant(onehot.clone())).sum().scale(-1.0 / rows as f64);
        let g = tape.backward(loss);
        let grads = [g.get(w), g.get(b)];
        opt.step(vec![&mut ro.weight, &mut ro.bias], &grads, cfg.lr);
    }
    Ok(ro)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_interval_classes() {
        let n = 200;
        let f = Mat::from_fn(n, 1, |r, _| -1.0 + 2.0 * (r as f64 + 0.5) / n as f64);
        let labels: Vec<usize> = (0..n).map(|r| (4 * r) / n).collect();
        let ro = train_shared_readout(&[f.clone()], &[labels.clone()], 4, &ReadoutConfig::default()).unwrap();
        assert!(ro.accuracy(&[f], &[labels]) > 0.95);
    }
}
