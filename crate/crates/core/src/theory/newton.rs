use serde::{Deserialize, Serialize};

use crate::compfun::derivative::{jacobian, FdSteps, Scheme};
use crate::compfun::generator::SmoothMap;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Converged when the squared residual falls below this value.
    pub residual_tol: f64,
    /// Converged when the step is below `step_tol * (1 + ‖z‖)`.
    pub step_tol: f64,
    /// Ridge added to the normal equations on the regularized retry.
    pub ridge: f64,
    pub steps: FdSteps,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { max_iter: 100, residual_tol: 1e-28, step_tol: 1e-14, ridge: 1e-10, steps: FdSteps::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub z: Vec<f64>,
    /// `‖f(z) − x‖²` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// Jacobian through jets when the map supports them, otherwise central differences.
pub fn best_jacobian(f: &dyn SmoothMap, z: &[f64], steps: &FdSteps) -> Result<Mat> {
    match jacobian(f, z, Scheme::Analytic, steps) {
        Err(Error::Capability(_)) => jacobian(f, z, Scheme::CentralDifference, steps),
        other => other,
    }
}

fn sq_residual(f: &dyn SmoothMap, z: &[f64], x: &[f64]) -> (Vector, f64) {
    let r = Vector::from_iterator(x.len(), f.eval(z).into_iter().zip(x).map(|(a, b)| a - b));
    let s = r.norm_squared();
    (r, s)
}

fn solve_normal(j: &Mat, r: &Vector, ridge: f64) -> Option<Vector> {
    let mut jtj = j.transpose() * j;
    for i in 0..jtj.nrows() {
        jtj[(i, i)] += ridge;
    }
    let rhs = -(j.transpose() * r);
    jtj.cholesky().map(|c| c.solve(&rhs))
}

/// Gauss–Newton on `½‖f(z) − x‖²` from `z0`, with backtracking.
///
/// For square maps this reduces to Newton's method on `f(z) = x`; off the
/// image it converges to the least-squares projection.
pub fn newton_left_inverse(f: &dyn SmoothMap, x: &[f64], z0: &[f64], cfg: &NewtonConfig) -> Result<NewtonResult> {
    if x.len() != f.output_dim() {
        return Err(Error::Dimension { context: "newton target", expected: f.output_dim(), got: x.len() });
    }
    if z0.len() != f.input_dim() {
        return Err(Error::Dimension { context: "newton start", expected: f.input_dim(), got: z0.len() });
    }
    let mut z = Vector::from_column_slice(z0);
    let (mut r, mut s) = sq_residual(f, z.as_slice(), x);
    if !s.is_finite() {
        return Err(Error::NonFinite { context: "newton residual", offset: vec![0.0; z0.len()] });
    }
    for it in 0..cfg.max_iter {
        if s <= cfg.residual_tol {
            return Ok(NewtonResult { z: z.as_slice().to_vec(), residual: s, iterations: it });
        }
        let j = best_jacobian(f, z.as_slice(), &cfg.steps)?;
        let delta = match solve_normal(&j, &r, 0.0) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                let scale = (j.transpose() * &j).diagonal().max().max(1.0);
                solve_normal(&j, &r, cfg.ridge * scale).ok_or(Error::Conditioning {
                    sigma_min: crate::linalg::sigma_min(&j),
                    threshold: cfg.ridge,
                })?
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &z + &delta * t;
            let (rc, sc) = sq_residual(f, cand.as_slice(), x);
            if sc.is_finite() && sc <= s {
                z = cand;
                r = rc;
                s = sc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let small_step = delta.norm() * t <= cfg.step_tol * (1.0 + z.norm());
        if !accepted || small_step {
            return Ok(NewtonResult { z: z.as_slice().to_vec(), residual: s, iterations: it + 1 });
        }
    }
    if s <= cfg.residual_tol {
        return Ok(NewtonResult { z: z.as_slice().to_vec(), residual: s, iterations: cfg.max_iter });
    }
    Err(Error::Convergence { iterations: cfg.max_iter, residual: s })
}

/// A generator's left inverse realised by Gauss–Newton, warm-started from a
/// fixed latent. Failed solves evaluate to NaN so derivative stencils report them.
pub struct NewtonInverse<'a> {
    pub f: &'a dyn SmoothMap,
    pub start: Vec<f64>,
    pub cfg: NewtonConfig,
}

impl SmoothMap for NewtonInverse<'_> {
    fn input_dim(&self) -> usize {
        self.f.output_dim()
    }
    fn output_dim(&self) -> usize {
        self.f.input_dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match newton_left_inverse(self.f, x, &self.start, &self.cfg) {
            Ok(r) => r.z,
            Err(_) => vec![f64::NAN; self.f.input_dim()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compfun::generator::FnMap;

    #[test]
    fn identity_converges_immediately() {
        let f = FnMap::new(2, 2, |z: &[f64]| z.to_vec());
        let r = newton_left_inverse(&f, &[1.5, -2.0], &[0.0, 0.0], &NewtonConfig::default()).unwrap();
        assert!(r.iterations <= 2);
        assert!((r.z[0] - 1.5).abs() < 1e-14 && (r.z[1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_matches_bisection() {
        let f = FnMap::new(1, 1, |z: &[f64]| vec![z[0].powi(3) + z[0]]);
        let r = newton_left_inverse(&f, &[10.0], &[0.0], &NewtonConfig::default()).unwrap();
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) + mid < 10.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((r.z[0] - lo).abs() < 1e-9);
        assert!((r.z[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn curve_point() {
        let f = FnMap::new(1, 2, |z: &[f64]| vec![z[0], z[0] * z[0]]);
        let r = newton_left_inverse(&f, &[2.0, 4.0], &[1.0], &NewtonConfig::default()).unwrap();
        assert!((r.z[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let f = FnMap::new(1, 1, |z: &[f64]| vec![z[0].exp()]);
        let cfg = NewtonConfig { max_iter: 2, ..NewtonConfig::default() };
        match newton_left_inverse(&f, &[1e6], &[0.0], &cfg) {
            Err(Error::Convergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
