use serde::{Deserialize, Serialize};

use super::generator::{SlotStructure, SmoothMap};
use super::jet::Jet3;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact derivatives propagated through [`Jet3`] scalars.
    Analytic,
    /// Products of central-difference stencils.
    CentralDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    /// Step for first derivatives.
    pub first: f64,
    /// Step for second and third derivatives.
    pub higher: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { first: 1e-4, higher: 1e-3 }
    }
}

/// Derivatives of a map at one point up to the requested order.
#[derive(Clone, Debug)]
pub struct DerivativeReport {
    pub point: Vec<f64>,
    pub order: usize,
    pub scheme: Scheme,
    /// Step used for the highest order, `None` for the analytic scheme.
    pub step: Option<f64>,
    /// `d_x x d_z`.
    pub jacobian: Mat,
    /// One symmetric `d_z x d_z` matrix per output coordinate.
    pub hessians: Option<Vec<Mat>>,
    /// Per output coordinate, the tensor flattened as `(i * d_z + j) * d_z + l`.
    pub third: Option<Vec<Vec<f64>>>,
}

/// Mixed partial `∂_{c_1} ... ∂_{c_p} f(z)` for every output coordinate, with
/// `p = coords.len() ≤ 3`. Repeated coordinates give higher pure derivatives.
pub fn mixed_partial(
    f: &dyn SmoothMap,
    z: &[f64],
    coords: &[usize],
    scheme: Scheme,
    steps: &FdSteps,
) -> Result<Vec<f64>> {
    check_point(f, z)?;
    if coords.is_empty() || coords.len() > 3 {
        return Err(Error::Capability(format!("mixed partials of order {} are not supported", coords.len())));
    }
    if let Some(&c) = coords.iter().find(|&&c| c >= z.len()) {
        return Err(Error::Dimension { context: "partial derivative coordinate", expected: z.len(), got: c });
    }
    match scheme {
        Scheme::Analytic => {
            let mut jets: Vec<Jet3> = z.iter().map(|&v| Jet3::constant(v)).collect();
            for (bit, &c) in coords.iter().enumerate() {
                let mut seeded = jets[c];
                seeded = seeded + Jet3::seeded(0.0, 1 << bit);
                jets[c] = seeded;
            }
            let out = f.eval_jet(&jets).ok_or_else(|| {
                Error::Capability("map has no analytic derivative path; use central differences".into())
            })?;
            let mask = ((1u16 << coords.len()) - 1) as u8;
            let vals: Vec<f64> = out.iter().map(|j| j.coeff(mask)).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "analytic derivative", offset: vec![0.0; z.len()] });
            }
            Ok(vals)
        }
        Scheme::CentralDifference => {
            let h = if coords.len() == 1 { steps.first } else { steps.higher };
            stencil(f, z, coords, h)
        }
    }
}

fn stencil(f: &dyn SmoothMap, z: &[f64], coords: &[usize], h: f64) -> Result<Vec<f64>> {
    let p = coords.len();
    let mut acc = vec![0.0; f.output_dim()];
    let mut point = z.to_vec();
    for signs in 0..(1u32 << p) {
        point.copy_from_slice(z);
        let mut sign = 1.0;
        for (bit, &c) in coords.iter().enumerate() {
            if signs & (1 << bit) != 0 {
                point[c] -= h;
                sign = -sign;
            } else {
                point[c] += h;
            }
        }
        let v = f.eval(&point);
        if v.iter().any(|x| !x.is_finite()) {
            let offset = point.iter().zip(z).map(|(a, b)| a - b).collect();
            return Err(Error::NonFinite { context: "finite-difference stencil", offset });
        }
        for (a, b) in acc.iter_mut().zip(v) {
            *a += sign * b;
        }
    }
    let denom = (2.0 * h).powi(p as i32);
    Ok(acc.into_iter().map(|a| a / denom).collect())
}

fn check_point(f: &dyn SmoothMap, z: &[f64]) -> Result<()> {
    if z.len() != f.input_dim() {
        return Err(Error::Dimension { context: "derivative point", expected: f.input_dim(), got: z.len() });
    }
    Ok(())
}

/// `d_x x d_z` Jacobian.
pub fn jacobian(f: &dyn SmoothMap, z: &[f64], scheme: Scheme, steps: &FdSteps) -> Result<Mat> {
    check_point(f, z)?;
    let mut j = Mat::zeros(f.output_dim(), z.len());
    for c in 0..z.len() {
        let col = mixed_partial(f, z, &[c], scheme, steps)?;
        for (r, v) in col.into_iter().enumerate() {
            j[(r, c)] = v;
        }
    }
    Ok(j)
}

/// Per-output Hessians.
pub fn hessians(f: &dyn SmoothMap, z: &[f64], scheme: Scheme, steps: &FdSteps) -> Result<Vec<Mat>> {
    check_point(f, z)?;
    let d = z.len();
    let mut hs = vec![Mat::zeros(d, d); f.output_dim()];
    for i in 0..d {
        for j in i..d {
            let v = mixed_partial(f, z, &[i, j], scheme, steps)?;
            for (h, x) in hs.iter_mut().zip(v) {
                h[(i, j)] = x;
                h[(j, i)] = x;
            }
        }
    }
    Ok(hs)
}

/// Hessians from one Richardson step over central differences at `h` and
/// `h / 2`, cancelling the `O(h²)` truncation term.
pub fn hessians_extrapolated(f: &dyn SmoothMap, z: &[f64], steps: &FdSteps) -> Result<Vec<Mat>> {
    let coarse = hessians(f, z, Scheme::CentralDifference, steps)?;
    let half = FdSteps { higher: steps.higher / 2.0, ..*steps };
    let fine = hessians(f, z, Scheme::CentralDifference, &half)?;
    Ok(fine.iter().zip(&coarse).map(|(a, b)| (a * 4.0 - b) / 3.0).collect())
}

/// Per-output third-derivative tensors, flattened as `(i * d + j) * d + l`.
pub fn third_derivatives(f: &dyn SmoothMap, z: &[f64], scheme: Scheme, steps: &FdSteps) -> Result<Vec<Vec<f64>>> {
    check_point(f, z)?;
    let d = z.len();
    let mut ts = vec![vec![0.0; d * d * d]; f.output_dim()];
    for i in 0..d {
        for j in i..d {
            for l in j..d {
                let v = mixed_partial(f, z, &[i, j, l], scheme, steps)?;
                for (t, x) in ts.iter_mut().zip(v) {
                    for (a, b, c) in [(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                        t[(a * d + b) * d + c] = x;
                    }
                }
            }
        }
    }
    Ok(ts)
}

/// Jacobian and, depending on `order`, Hessians and third derivatives of `f`
/// at `z`.
pub fn derivative_oracle(
    f: &dyn SmoothMap,
    z: &[f64],
    order: usize,
    scheme: Scheme,
    steps: &FdSteps,
) -> Result<DerivativeReport> {
    if !(1..=3).contains(&order) {
        return Err(Error::Capability(format!("derivative order {order} is not supported (1 to 3)")));
    }
    let jac = jacobian(f, z, scheme, steps)?;
    let hessians = if order >= 2 { Some(hessians(f, z, scheme, steps)?) } else { None };
    let third = if order >= 3 { Some(third_derivatives(f, z, scheme, steps)?) } else { None };
    let step = match scheme {
        Scheme::Analytic => None,
        Scheme::CentralDifference => Some(if order == 1 { steps.first } else { steps.higher }),
    };
    Ok(DerivativeReport { point: z.to_vec(), order, scheme, step, jacobian: jac, hessians, third })
}

/// Size of the cross-slot derivatives that an interaction generator of degree
/// `n` must have zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSlotResidual {
    /// Order of the mixed partials that were checked (`n + 1`).
    pub order: usize,
    /// Largest absolute mixed partial involving at least two slots.
    pub mixed: f64,
    /// For `n = 0` only: `max_i max_{k≠l} ‖D_{z_k} f_i‖ ‖D_{z_l} f_i‖`.
    pub product: Option<f64>,
}

impl CrossSlotResidual {
    pub fn value(&self) -> f64 {
        self.mixed.max(self.product.unwrap_or(0.0))
    }
}

/// Mixed partials of order `n + 1` across slots, plus the gradient product
/// condition for `n = 0`.
pub fn cross_slot_residual(
    f: &dyn SmoothMap,
    slots: &SlotStructure,
    z: &[f64],
    n: u32,
    scheme: Scheme,
    steps: &FdSteps,
) -> Result<CrossSlotResidual> {
    check_point(f, z)?;
    if slots.latent_dim() != z.len() {
        return Err(Error::Dimension { context: "slot structure", expected: z.len(), got: slots.latent_dim() });
    }
    let d = z.len();
    let max_abs = |v: Vec<f64>| v.into_iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut mixed = 0.0f64;
    match n {
        0 | 1 => {
            for i in 0..d {
                for j in i + 1..d {
                    if slots.slot_of(i) != slots.slot_of(j) {
                        mixed = mixed.max(max_abs(mixed_partial(f, z, &[i, j], scheme, steps)?));
                    }
                }
            }
        }
        2 => {
            for i in 0..d {
                for j in i..d {
                    for l in j..d {
                        let (a, b, c) = (slots.slot_of(i), slots.slot_of(j), slots.slot_of(l));
                        if a != b || b != c {
                            mixed = mixed.max(max_abs(mixed_partial(f, z, &[i, j, l], scheme, steps)?));
                        }
                    }
                }
            }
        }
        _ => {
            return Err(Error::Capability(format!(
                "cross-slot residual needs mixed partials of order {}; only degrees up to 2 are supported",
                n + 1
            )))
        }
    }
    let product = if n == 0 {
        let jac = jacobian(f, z, scheme, steps)?;
        let mut best = 0.0f64;
        for row in 0..jac.nrows() {
            let norms: Vec<f64> =
                (0..slots.slots()).map(|k| slots.range(k).map(|c| jac[(row, c)].powi(2)).sum::<f64>().sqrt()).collect();
            for k in 0..norms.len() {
                for l in 0..norms.len() {
                    if k != l {
                        best = best.max(norms[k] * norms[l]);
                    }
                }
            }
        }
        Some(best)
    } else {
        None
    };
    Ok(CrossSlotResidual { order: n as usize + 1, mixed, product })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiffeomorphismReport {
    pub threshold: f64,
    pub min_sigma: f64,
    pub argmin: usize,
    pub sigmas: Vec<f64>,
    pub passed: bool,
}

/// Smallest singular value of `Df` over a set of sample points.
pub fn check_diffeomorphism(
    f: &dyn SmoothMap,
    samples: &[Vec<f64>],
    threshold: f64,
    scheme: Scheme,
    steps: &FdSteps,
) -> Result<DiffeomorphismReport> {
    if samples.is_empty() {
        return Err(Error::Config("diffeomorphism check needs at least one sample".into()));
    }
    let sigmas = samples
        .iter()
        .map(|z| jacobian(f, z, scheme, steps).map(|j| linalg::sigma_min(&j)))
        .collect::<Result<Vec<f64>>>()?;
    let (argmin, min_sigma) =
        sigmas.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    Ok(DiffeomorphismReport { threshold, min_sigma, argmin, passed: min_sigma >= threshold, sigmas })
}
