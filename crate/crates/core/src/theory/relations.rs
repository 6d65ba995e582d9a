//! Second-order structure of left inverses of generators.

use serde::{Deserialize, Serialize};

use super::certificate::{Residual, TheoryCertificate};
use super::newton::{best_jacobian, NewtonConfig, NewtonInverse};
use crate::cert_input;
use crate::compfun::derivative::{hessians, hessians_extrapolated, FdSteps, Scheme};
use crate::compfun::generator::{AdditiveGenerator, SmoothMap};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationConfig {
    /// Points with `σ_min(Df)` below this are rejected.
    pub sigma_threshold: f64,
    /// Pass tolerance on the relative off-diagonal residual.
    pub tolerance: f64,
    /// Lower bound on the relative off-diagonal residual for the converse.
    pub converse_floor: f64,
    /// Floor on the matrix norm used to normalise off-diagonal residuals.
    pub norm_floor: f64,
    pub steps: FdSteps,
    /// Richardson-extrapolate the finite-difference Hessians of the inverse.
    pub extrapolate: bool,
    pub newton: NewtonConfig,
}

impl Default for RelationConfig {
    fn default() -> Self {
        RelationConfig {
            sigma_threshold: 0.1,
            tolerance: 1e-4,
            converse_floor: 1e-3,
            norm_floor: 1e-3,
            steps: FdSteps::default(),
            extrapolate: true,
            newton: NewtonConfig::default(),
        }
    }
}

/// The inverse varies on a length scale of roughly `σ_min(Df)` in observation
/// space, so the second-order step shrinks with it.
fn inverse_hessians(g: &dyn SmoothMap, x: &[f64], df: &Mat, cfg: &RelationConfig) -> Result<Vec<Mat>> {
    let steps = FdSteps { higher: cfg.steps.higher * linalg::sigma_min(df).min(1.0), ..cfg.steps };
    if cfg.extrapolate {
        hessians_extrapolated(g, x, &steps)
    } else {
        hessians(g, x, Scheme::CentralDifference, &steps)
    }
}

fn best_hessians(f: &dyn SmoothMap, z: &[f64], steps: &FdSteps) -> Result<Vec<Mat>> {
    match hessians(f, z, Scheme::Analytic, steps) {
        Err(Error::Capability(_)) => hessians(f, z, Scheme::CentralDifference, steps),
        other => other,
    }
}

/// `max |Dfᵀ D²g_s(f(z)) Df + Σ_k ∂_k g_s(f(z)) D²f_k|` for every output `s` of `g`.
/// Derivatives of `g` are taken by central differences.
pub fn key_relation_residual(f: &dyn SmoothMap, g: &dyn SmoothMap, z: &[f64], steps: &FdSteps) -> Result<Vec<f64>> {
    if g.input_dim() != f.output_dim() || g.output_dim() != f.input_dim() {
        return Err(Error::Dimension { context: "left inverse shape", expected: f.output_dim(), got: g.input_dim() });
    }
    let x = f.eval(z);
    let df = best_jacobian(f, z, steps)?;
    let d2f = best_hessians(f, z, steps)?;
    let dg = crate::compfun::derivative::jacobian(g, &x, Scheme::CentralDifference, steps)?;
    let d2g = hessians(g, &x, Scheme::CentralDifference, steps)?;
    Ok((0..g.output_dim())
        .map(|s| {
            let mut r = df.transpose() * &d2g[s] * &df;
            for (k, h) in d2f.iter().enumerate() {
                r += h * dg[(s, k)];
            }
            linalg::max_abs(&r)
        })
        .collect())
}

fn check_sigma(df: &Mat, threshold: f64) -> Result<()> {
    let s = linalg::sigma_min(df);
    if s < threshold {
        return Err(Error::Conditioning { sigma_min: s, threshold });
    }
    Ok(())
}

/// The matrices `(Dg)^{-T} D²g_s (Dg)^{-1}` at `x = f(z)` for a square map,
/// with `D²g` from finite differences of the Newton inverse.
pub fn inverse_hessian_matrices(f: &dyn SmoothMap, z: &[f64], cfg: &RelationConfig) -> Result<Vec<Mat>> {
    if f.input_dim() != f.output_dim() {
        return Err(Error::Precondition(format!(
            "square generator required, got d_z = {} and d_x = {}",
            f.input_dim(),
            f.output_dim()
        )));
    }
    let df = best_jacobian(f, z, &cfg.steps)?;
    check_sigma(&df, cfg.sigma_threshold)?;
    let g = NewtonInverse { f, start: z.to_vec(), cfg: cfg.newton };
    let x = f.eval(z);
    let d2g = inverse_hessians(&g, &x, &df, cfg)?;
    // Dg = Df^{-1}, so (Dg)^{-T} D²g_s (Dg)^{-1} = Dfᵀ D²g_s Df.
    Ok(d2g.iter().map(|h| df.transpose() * h * &df).collect())
}

/// Largest off-diagonal magnitude over the matrices, absolute and relative to
/// `max(max_s max|entry|, floor)`.
fn offdiag(ms: &[Mat], floor: f64) -> (f64, f64) {
    let abs = ms.iter().map(linalg::max_offdiag_abs).fold(0.0, f64::max);
    let scale = ms.iter().map(linalg::max_abs).fold(0.0, f64::max).max(floor);
    (abs, abs / scale)
}

/// Certifies that the inverse-Hessian matrices of a square additive generator
/// are diagonal at `z`.
pub fn lemma_second_diagonality(f: &AdditiveGenerator, z: &[f64], cfg: &RelationConfig) -> Result<TheoryCertificate> {
    let ms = inverse_hessian_matrices(f, z, cfg)?;
    let (abs, rel) = offdiag(&ms, cfg.norm_floor);
    Ok(TheoryCertificate::new(
        "lemma-second",
        cert_input! { "d" => z.len(), "z" => z },
        vec![Residual::at_most("offdiag_relative", rel, cfg.tolerance), Residual::at_most("offdiag_abs", abs, f64::INFINITY)],
    ))
}

/// The converse direction: a generator with a genuine cross term must produce a
/// clearly non-diagonal matrix.
pub fn lemma_second_converse(f: &dyn SmoothMap, z: &[f64], cfg: &RelationConfig) -> Result<TheoryCertificate> {
    let ms = inverse_hessian_matrices(f, z, cfg)?;
    let (abs, rel) = offdiag(&ms, cfg.norm_floor);
    Ok(TheoryCertificate::new(
        "lemma-second-converse",
        cert_input! { "d" => z.len(), "z" => z },
        vec![Residual::at_least("offdiag_relative", rel, cfg.converse_floor), Residual::at_most("offdiag_abs", abs, f64::INFINITY)],
    ))
}

/// Orthogonal projector `Df (DfᵀDf)^{-1} Dfᵀ` onto the tangent space of the
/// image at `f(z)`.
pub fn tangent_projector(f: &dyn SmoothMap, z: &[f64], steps: &FdSteps) -> Result<Mat> {
    let df = best_jacobian(f, z, steps)?;
    projector_from_jacobian(&df)
}

pub fn projector_from_jacobian(df: &Mat) -> Result<Mat> {
    let s = linalg::singular_values(df);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = if df.ncols() > df.nrows() { 0.0 } else { s.last().copied().unwrap_or(0.0) };
    if smin <= 1e-10 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::Conditioning { sigma_min: smin, threshold: 1e-10 * smax });
    }
    let gram = (df.transpose() * df).try_inverse().ok_or(Error::Conditioning { sigma_min: smin, threshold: 0.0 })?;
    Ok(df * gram * df.transpose())
}

/// The matrices `((DgΠ)^+)ᵀ D²g_s (DgΠ)^+` at `x = f(z)` for a generator
/// with `d_x > d_z`, where `g` is the Gauss–Newton projection inverse.
pub fn projected_inverse_hessian_matrices(f: &dyn SmoothMap, z: &[f64], cfg: &RelationConfig) -> Result<Vec<Mat>> {
    if f.output_dim() <= f.input_dim() {
        return Err(Error::Precondition(format!(
            "d_x > d_z required, got d_z = {} and d_x = {}",
            f.input_dim(),
            f.output_dim()
        )));
    }
    let df = best_jacobian(f, z, &cfg.steps)?;
    check_sigma(&df, cfg.sigma_threshold)?;
    let pi = projector_from_jacobian(&df)?;
    let g = NewtonInverse { f, start: z.to_vec(), cfg: cfg.newton };
    let x = f.eval(z);
    let dg = crate::compfun::derivative::jacobian(&g, &x, Scheme::CentralDifference, &cfg.steps)?;
    let d2g = inverse_hessians(&g, &x, &df, cfg)?;
    let p = linalg::pinv(&(dg * pi), 1e-10);
    Ok(d2g.iter().map(|h| p.transpose() * h * &p).collect())
}

/// Certifies diagonality of the tangent-projected inverse-Hessian matrices.
pub fn lemma_secondb_check(f: &dyn SmoothMap, z: &[f64], cfg: &RelationConfig) -> Result<TheoryCertificate> {
    let ms = projected_inverse_hessian_matrices(f, z, cfg)?;
    let (abs, rel) = offdiag(&ms, cfg.norm_floor);
    Ok(TheoryCertificate::new(
        "lemma-secondb",
        cert_input! { "d_z" => f.input_dim(), "d_x" => f.output_dim(), "z" => z },
        vec![Residual::at_most("offdiag_relative", rel, cfg.tolerance), Residual::at_most("offdiag_abs", abs, f64::INFINITY)],
    ))
}

/// Certifies `B = (AΠ)^+` for a right inverse `B` of `A`, where `Π` projects
/// orthogonally onto the column space of `B`.
pub fn moore_penrose_check(a: &Mat, b: &Mat, tolerance: f64) -> Result<TheoryCertificate> {
    let (d1, d2) = a.shape();
    if b.shape() != (d2, d1) {
        return Err(Error::Dimension { context: "right inverse shape", expected: d2, got: b.nrows() });
    }
    let ab = a * b;
    let defect = linalg::max_abs(&(ab - Mat::identity(d1, d1)));
    let scale = 1.0 + linalg::norm2(a) * linalg::norm2(b);
    if defect > 1e-12 * scale {
        return Err(Error::Precondition(format!("A·B differs from the identity by {defect:e}")));
    }
    let pi = linalg::range_projector(b, 1e-10);
    let p = linalg::pinv(&(a * pi), 1e-10);
    let err = linalg::max_abs(&(p - b));
    Ok(TheoryCertificate::new(
        "moore-penrose",
        cert_input! { "d1" => d1, "d2" => d2 },
        vec![Residual::at_most("max_entry_error", err, tolerance), Residual::at_most("right_inverse_defect", defect, 1e-12 * scale)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compfun::generator::FnMap;

    #[test]
    fn projector_for_embedding() {
        let df = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let p = projector_from_jacobian(&df).unwrap();
        assert_eq!(p, Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(projector_from_jacobian(&Mat::zeros(2, 1)), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn moore_penrose_simple() {
        let a = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(moore_penrose_check(&a, &b, 1e-12).unwrap().passed());
        let bad = Mat::from_row_slice(2, 1, &[2.0, 0.0]);
        assert!(matches!(moore_penrose_check(&a, &bad, 1e-12), Err(Error::Precondition(_))));
    }

    #[test]
    fn linear_maps_have_zero_key_residual() {
        let f = FnMap::new(2, 2, |z: &[f64]| vec![2.0 * z[0] + z[1], z[0] - z[1]]);
        let g = FnMap::new(2, 2, |x: &[f64]| vec![(x[0] + x[1]) / 3.0, (x[0] - 2.0 * x[1]) / 3.0]);
        let r = key_relation_residual(&f, &g, &[0.2, 0.4], &FdSteps::default()).unwrap();
        assert!(r.iter().all(|&v| v < 1e-9));
    }
}
