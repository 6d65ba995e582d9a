//! Cross-slot Hessian penalty `Σ_{k≠l} ‖D²_{z_k z_l} f(z)‖_F`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::decoder::Decoder;
use super::tape::{Tape, Var};
use crate::compfun::generator::{SlotStructure, SmoothMap};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyNorm {
    /// Sum of Frobenius norms over ordered slot pairs.
    Frobenius,
    /// Sum of squared Frobenius norms over ordered slot pairs.
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// Every cross-slot mixed partial by a four-point central stencil.
    ExactFd { step: f64 },
    /// Rademacher probes `v_kᵀ D² v_l`; unbiased for the squared norm.
    Probes { count: usize, seed: u64, step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub mode: PenaltyMode,
    pub norm: PenaltyNorm,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { mode: PenaltyMode::ExactFd { step: 1e-3 }, norm: PenaltyNorm::Frobenius }
    }
}

fn directional_second(f: &dyn SmoothMap, z: &[f64], u: &[f64], w: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; f.output_dim()];
    let mut p = vec![0.0; z.len()];
    for (su, sw, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
        for i in 0..z.len() {
            p[i] = z[i] + h * (su * u[i] + sw * w[i]);
        }
        let v = f.eval(&p);
        if v.iter().any(|x| !x.is_finite()) {
            let offset = p.iter().zip(z).map(|(a, b)| a - b).collect();
            return Err(Error::NonFinite { context: "hessian penalty stencil", offset });
        }
        for (a, b) in acc.iter_mut().zip(v) {
            *a += sign * b;
        }
    }
    Ok(acc.into_iter().map(|a| a / (4.0 * h * h)).collect())
}

/// Penalty at a single latent point.
pub fn hessian_penalty(f: &dyn SmoothMap, slots: &SlotStructure, z: &[f64], cfg: &PenaltyConfig) -> Result<f64> {
    if z.len() != f.input_dim() || slots.latent_dim() != z.len() {
        return Err(Error::Dimension { context: "penalty latent", expected: f.input_dim(), got: z.len() });
    }
    let d = z.len();
    let unit = |i: usize| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    };
    match cfg.mode {
        PenaltyMode::ExactFd { step } => {
            let k_slots = slots.slots();
            let mut total = 0.0;
            for k in 0..k_slots {
                for l in k + 1..k_slots {
                    let mut sq = 0.0;
                    for i in slots.range(k) {
                        for j in slots.range(l) {
                            sq += directional_second(f, z, &unit(i), &unit(j), step)?.iter().map(|v| v * v).sum::<f64>();
                        }
                    }
                    // Blocks (k, l) and (l, k) are transposes of each other.
                    total += 2.0 * match cfg.norm {
                        PenaltyNorm::Frobenius => sq.sqrt(),
                        PenaltyNorm::Squared => sq,
                    };
                }
            }
            Ok(total)
        }
        PenaltyMode::Probes { count, seed, step } => {
            if cfg.norm != PenaltyNorm::Squared {
                return Err(Error::Config("probe estimates are only unbiased for the squared penalty".into()));
            }
            if count == 0 {
                return Err(Error::Config("probe count must be positive".into()));
            }
            let mut r = rng::stream(seed, 0);
            let mut total = 0.0;
            for _ in 0..count {
                let v: Vec<f64> = (0..d).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
                for k in 0..slots.slots() {
                    for l in k + 1..slots.slots() {
                        let mut u = vec![0.0; d];
                        let mut w = vec![0.0; d];
                        for i in slots.range(k) {
                            u[i] = v[i];
                        }
                        for j in slots.range(l) {
                            w[j] = v[j];
                        }
                        let s: f64 = directional_second(f, z, &u, &w, step)?.iter().map(|x| x * x).sum();
                        total += 2.0 * s;
                    }
                }
            }
            Ok(total / count as f64)
        }
    }
}

/// Batch mean of the exact-stencil penalty, recorded on the tape so it can be
/// differentiated with respect to the decoder parameters. The latent points
/// are treated as constants.
pub fn hessian_penalty_tape<'t>(
    dec: &Decoder,
    slots: &SlotStructure,
    z: &Mat,
    params: &[Var<'t>],
    step: f64,
    norm: PenaltyNorm,
    tape: &'t Tape,
) -> Var<'t> {
    let n = z.nrows();
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut p = z.clone();
        p.column_mut(i).add_scalar_mut(si * step);
        p.column_mut(j).add_scalar_mut(sj * step);
        dec.forward_tape(tape.constant(p), params)
    };
    let mut total: Option<Var<'t>> = None;
    for k in 0..slots.slots() {
        for l in k + 1..slots.slots() {
            let mut sq: Option<Var<'t>> = None;
            for i in slots.range(k) {
                for j in slots.range(l) {
                    let d = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                        + shifted(i, -1.0, j, -1.0))
                    .scale(1.0 / (4.0 * step * step));
                    let s = d.square().sum_rows();
                    sq = Some(match sq {
                        Some(a) => a + s,
                        None => s,
                    });
                }
            }
            let sq = sq.unwrap();
            let block = match norm {
                PenaltyNorm::Frobenius => sq.sqrt_eps(1e-12),
                PenaltyNorm::Squared => sq,
            };
            total = Some(match total {
                Some(t) => t + block,
                None => block,
            });
        }
    }
    match total {
        Some(t) => t.sum().scale(2.0 / n as f64),
        None => tape.constant(Mat::zeros(1, 1)),
    }
}
