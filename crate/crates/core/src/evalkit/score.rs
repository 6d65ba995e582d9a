use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::compfun::generator::SlotStructure;
use crate::compfun::multi_index::{enumerate_multi_indices, MultiIndex};
use crate::error::{Error, Result};
use crate::learnkit::readout::{train_shared_readout, ReadoutConfig, SharedReadout};
use crate::linalg::{self, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Degree of the polynomial features of the slot-to-slot regressions.
    pub poly_degree: u32,
    /// Ridge weight, relative to the record count.
    pub ridge: f64,
    pub variance_floor: f64,
    pub readout: ReadoutConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { poly_degree: 1, ridge: 1e-9, variance_floor: 1e-12, readout: ReadoutConfig::default() }
    }
}

/// Ridge regression on standardized polynomial features of one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotRegression {
    monomials: Vec<MultiIndex>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weight: Mat,
    intercept: Vec<f64>,
}

impl SlotRegression {
    fn raw_features(monomials: &[MultiIndex], x: &Mat) -> Mat {
        Mat::from_fn(x.nrows(), monomials.len(), |i, j| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            monomials[j].eval_scalar(&row)
        })
    }

    pub fn fit(x: &Mat, y: &Mat, degree: u32, ridge: f64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || y.nrows() != n {
            return Err(Error::Dimension { context: "regression records", expected: n, got: y.nrows() });
        }
        let monomials: Vec<MultiIndex> =
            enumerate_multi_indices(x.ncols(), degree.max(1))?.into_iter().filter(|a| a.order() > 0).collect();
        let mut f = Self::raw_features(&monomials, x);
        let mut mean = Vec::with_capacity(f.ncols());
        let mut scale = Vec::with_capacity(f.ncols());
        for j in 0..f.ncols() {
            let mu = f.column(j).mean();
            let sd = (f.column(j).iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12);
            f.column_mut(j).apply(|v| *v = (*v - mu) / sd);
            mean.push(mu);
            scale.push(sd);
        }
        let ymean: Vec<f64> = (0..y.ncols()).map(|j| y.column(j).mean()).collect();
        let yc = Mat::from_fn(n, y.ncols(), |i, j| y[(i, j)] - ymean[j]);
        let mut gram = f.transpose() * &f;
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge * n as f64;
        }
        let rhs = f.transpose() * yc;
        let weight = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => linalg::pinv(&gram, 1e-12) * rhs,
        };
        Ok(SlotRegression { monomials, mean, scale, weight, intercept: ymean })
    }

    pub fn predict(&self, x: &Mat) -> Mat {
        let mut f = Self::raw_features(&self.monomials, x);
        for j in 0..f.ncols() {
            let (mu, sd) = (self.mean[j], self.scale[j]);
            f.column_mut(j).apply(|v| *v = (*v - mu) / sd);
        }
        let mut out = f * &self.weight;
        for j in 0..out.ncols() {
            out.column_mut(j).add_scalar_mut(self.intercept[j]);
        }
        out
    }
}

/// `1 − SSE / max(SST, floor)` pooled over the columns of `y`.
pub fn r_squared(y: &Mat, pred: &Mat, floor: f64) -> f64 {
    let mut sse = 0.0;
    let mut sst = 0.0;
    for j in 0..y.ncols() {
        let mu = y.column(j).mean();
        for i in 0..y.nrows() {
            sse += (y[(i, j)] - pred[(i, j)]).powi(2);
            sst += (y[(i, j)] - mu).powi(2);
        }
    }
    1.0 - sse / sst.max(floor)
}

/// Inferred and ground-truth latents of one partition with per-slot labels
/// (`labels[k][i]`).
#[derive(Clone, Copy, Debug)]
pub struct SlotData<'a> {
    pub z_hat: &'a Mat,
    pub z: &'a Mat,
    pub labels: &'a [Vec<usize>],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Ground-truth slot `k` is matched to inferred slot `permutation[k]`.
    pub permutation: Vec<usize>,
    /// `cost[k][j] = 1 − R²` of predicting ground-truth slot `k` from inferred slot `j` on ID data.
    pub cost: Vec<Vec<f64>>,
    pub matching_cost: String,
    pub r2_id: Vec<f64>,
    pub r2_ood: Option<Vec<f64>>,
    pub mean_r2_id: f64,
    pub mean_r2_ood: Option<f64>,
    pub readout_accuracy_id: f64,
    pub readout_accuracy_ood: Option<f64>,
    pub recon_mse_id: Option<f64>,
    pub recon_mse_ood: Option<f64>,
    pub config_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

fn slot_block(m: &Mat, slots: &SlotStructure, k: usize) -> Mat {
    m.columns(slots.range(k).start, slots.slot_dim()).into_owned()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Matches inferred to ground-truth slots by Hungarian assignment on ID
/// regression costs, then scores the matched slots on both partitions. The
/// readout is one softmax classifier shared by every slot, trained on the ID
/// regression-aligned slot features and applied frozen to OOD.
pub fn slot_match_and_score(
    slots: &SlotStructure,
    id: SlotData<'_>,
    ood: Option<SlotData<'_>>,
    classes: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let k = slots.slots();
    for part in std::iter::once(&id).chain(ood.as_ref()) {
        if part.z_hat.shape() != part.z.shape() || part.z.ncols() != slots.latent_dim() {
            return Err(Error::Dimension { context: "inferred latents", expected: slots.latent_dim(), got: part.z_hat.ncols() });
        }
        if part.labels.len() != k || part.labels.iter().any(|l| l.len() != part.z.nrows()) {
            return Err(Error::Dimension { context: "slot labels", expected: k, got: part.labels.len() });
        }
    }
    let mut warnings = Vec::new();
    let mut cost = Mat::zeros(k, k);
    let mut fits = vec![Vec::with_capacity(k); k];
    for (gt, row) in fits.iter_mut().enumerate() {
        let y = slot_block(id.z, slots, gt);
        for j in 0..k {
            let x = slot_block(id.z_hat, slots, j);
            let fit = SlotRegression::fit(&x, &y, cfg.poly_degree, cfg.ridge)?;
            cost[(gt, j)] = 1.0 - r_squared(&y, &fit.predict(&x), cfg.variance_floor);
            row.push(fit);
        }
    }
    let (permutation, _) = hungarian(&cost)?;
    let aligned = |part: &SlotData<'_>| -> (Vec<Mat>, Vec<f64>) {
        (0..k)
            .map(|gt| {
                let pred = fits[gt][permutation[gt]].predict(&slot_block(part.z_hat, slots, permutation[gt]));
                let r2 = r_squared(&slot_block(part.z, slots, gt), &pred, cfg.variance_floor);
                (pred, r2)
            })
            .unzip()
    };
    let (feat_id, r2_id) = aligned(&id);
    let ood_scores = ood.as_ref().filter(|p| p.z.nrows() > 0).map(|p| aligned(p));

    let distinct: std::collections::BTreeSet<usize> = id.labels.iter().flatten().copied().collect();
    let (acc_id, acc_ood) = if distinct.len() <= 1 {
        warnings.push("in-domain labels have a single class; readout accuracy reported as 1".into());
        (1.0, ood_scores.as_ref().map(|_| 1.0))
    } else {
        let readout: SharedReadout = train_shared_readout(&feat_id, id.labels, classes, &cfg.readout)?;
        let acc_ood = match (&ood, &ood_scores) {
            (Some(p), Some((f, _))) => Some(readout.accuracy(f, p.labels)),
            _ => None,
        };
        (readout.accuracy(&feat_id, id.labels), acc_ood)
    };
    let (r2_ood, mean_r2_ood) = match ood_scores {
        Some((_, r2)) => {
            let m = mean(&r2);
            (Some(r2), Some(m))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        permutation,
        cost: (0..k).map(|i| cost.row(i).iter().copied().collect()).collect(),
        matching_cost: format!("1 - R^2 of ridge regression on degree-{} polynomial slot features", cfg.poly_degree),
        mean_r2_id: mean(&r2_id),
        r2_id,
        r2_ood,
        mean_r2_ood,
        readout_accuracy_id: acc_id,
        readout_accuracy_ood: acc_ood,
        recon_mse_id: None,
        recon_mse_ood: None,
        config_hash: None,
        seeds: BTreeMap::new(),
        warnings,
    })
}

impl EvalReport {
    /// Flat `metric,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        let mut row = |k: String, v: String| out.write_record([k, v]);
        row("permutation".into(), self.permutation.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))?;
        for (k, v) in self.r2_id.iter().enumerate() {
            row(format!("r2_id_{k}"), v.to_string())?;
        }
        for (k, v) in self.r2_ood.iter().flatten().enumerate() {
            row(format!("r2_ood_{k}"), v.to_string())?;
        }
        row("mean_r2_id".into(), self.mean_r2_id.to_string())?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        row("mean_r2_ood".into(), opt(self.mean_r2_ood))?;
        row("readout_accuracy_id".into(), self.readout_accuracy_id.to_string())?;
        row("readout_accuracy_ood".into(), opt(self.readout_accuracy_ood))?;
        row("recon_mse_id".into(), opt(self.recon_mse_id))?;
        row("recon_mse_ood".into(), opt(self.recon_mse_ood))?;
        out.flush()?;
        Ok(())
    }
}
