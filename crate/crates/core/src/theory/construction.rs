//! Explicit additive generators whose left inverse has a prescribed Jacobian
//! and prescribed Hessians at a base point.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::certificate::{Residual, TheoryCertificate};
use super::newton::{newton_left_inverse, NewtonConfig};
use crate::cert_input;
use crate::compfun::derivative::{hessians, jacobian, FdSteps, Scheme};
use crate::compfun::generator::{
    AdditiveGenerator, InteractionGenerator, InteractionTerm, PolyMap, PolyTerm, SlotMap, SlotStructure, SmoothMap,
};
use crate::compfun::multi_index::MultiIndex;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::rng;

const RANK_CUTOFF: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructOptions {
    /// Attempt the construction for `d_x < d_z³`. Experimental: nothing
    /// guarantees a large enough null space there.
    pub allow_below_cubic: bool,
}

fn check_dims(a: &Mat, bs: &[Mat], opts: &ConstructOptions) -> Result<()> {
    let (d_z, d_x) = a.shape();
    if d_z == 0 {
        return Err(Error::Config("A must have at least one row".into()));
    }
    if bs.len() != d_z {
        return Err(Error::Dimension { context: "number of target Hessians", expected: d_z, got: bs.len() });
    }
    for b in bs {
        if b.shape() != (d_x, d_x) {
            return Err(Error::Dimension { context: "target Hessian", expected: d_x, got: b.nrows() });
        }
    }
    if !opts.allow_below_cubic && d_x < d_z.pow(3) {
        return Err(Error::Precondition(format!("d_x = {d_x} is below d_z^3 = {}", d_z.pow(3))));
    }
    Ok(())
}

/// A `d_z`-dimensional subspace of the column span of `n` (orthonormal
/// columns) on which `A` is as well conditioned as possible: the span of
/// `n nᵀ Aᵀ`. Falls back to the leading columns of `n` when that projection is
/// rank deficient, in which case the column solve reports infeasibility.
fn aligned_subspace(a: &Mat, n: &Mat) -> Mat {
    let d_z = a.nrows();
    let q = linalg::range_basis(&(n.transpose() * a.transpose()), RANK_CUTOFF);
    if q.ncols() == d_z {
        n * q
    } else {
        n.columns(0, d_z).into_owned()
    }
}

/// Finds `M` with `A M = Id` and every `Mᵀ B_s M` diagonal.
///
/// Subspaces `V_1, ..., V_{d_z}` are built so that `vᵀ B_s w = 0` whenever
/// `v ∈ V_i`, `w ∈ V_j`, `i ≠ j`; column `i` of `M` is then the unique
/// element `w ∈ V_i` with `A w = e_i`.
pub fn construct_m(a: &Mat, bs: &[Mat], opts: &ConstructOptions) -> Result<Mat> {
    check_dims(a, bs, opts)?;
    let (d_z, d_x) = a.shape();
    let mut bases: Vec<Mat> = vec![aligned_subspace(a, &Mat::identity(d_x, d_x))];
    for j in 1..d_z {
        let mut t = Mat::zeros(d_z * d_z * j, d_x);
        let mut row = 0;
        for b in bs {
            for basis in &bases {
                for k in 0..d_z {
                    t.set_row(row, &(basis.column(k).transpose() * b));
                    row += 1;
                }
            }
        }
        let null = linalg::null_space(&t, RANK_CUTOFF);
        if null.ncols() < d_z {
            return Err(Error::Precondition(format!(
                "constraint null space at step {} has dimension {} < d_z = {d_z}",
                j + 1,
                null.ncols()
            )));
        }
        bases.push(aligned_subspace(a, &null));
    }
    let mut m = Mat::zeros(d_x, d_z);
    for (i, basis) in bases.iter().enumerate() {
        let av = a * basis;
        let sv = linalg::singular_values(&av);
        let smin = sv.last().copied().unwrap_or(0.0);
        let scale = linalg::norm2(a).max(1.0);
        if smin <= RANK_CUTOFF * scale {
            return Err(Error::Infeasible { column: i, sigma_min: smin });
        }
        let mut e = Vector::zeros(d_z);
        e[i] = 1.0;
        let lambda = av.lu().solve(&e).ok_or(Error::Infeasible { column: i, sigma_min: smin })?;
        m.set_column(i, &(basis * lambda));
    }
    Ok(m)
}

/// Diagonal `Λ^1..Λ^{d_x}` with `D^s = −Σ_i A_{s,i} Λ^i`, as the minimum-norm
/// solution of `(A ⊗ Id) λ = −d`.
pub fn solve_lambda(a: &Mat, ds: &[Mat]) -> Result<Vec<Mat>> {
    let (d_z, d_x) = a.shape();
    if ds.len() != d_z {
        return Err(Error::Dimension { context: "number of diagonal targets", expected: d_z, got: ds.len() });
    }
    let sv = linalg::singular_values(a);
    if sv.len() < d_z || sv.last().copied().unwrap_or(0.0) <= RANK_CUTOFF * sv[0] {
        return Err(Error::Precondition("A must have full row rank".into()));
    }
    let mut d = Vector::zeros(d_z * d_z);
    for (s, dm) in ds.iter().enumerate() {
        if dm.shape() != (d_z, d_z) {
            return Err(Error::Dimension { context: "diagonal target", expected: d_z, got: dm.nrows() });
        }
        let scale = linalg::max_abs(dm).max(1.0);
        if linalg::max_offdiag_abs(dm) > 1e-9 * scale {
            return Err(Error::Precondition(format!("target {s} is not diagonal")));
        }
        for j in 0..d_z {
            d[s * d_z + j] = dm[(j, j)];
        }
    }
    let k = linalg::kron(a, &Mat::identity(d_z, d_z));
    let lambda = linalg::pinv(&k, RANK_CUTOFF) * (-d);
    Ok((0..d_x).map(|i| Mat::from_diagonal(&Vector::from_fn(d_z, |j, _| lambda[i * d_z + j]))).collect())
}

/// The constructed generator/left-inverse pair.
#[derive(Clone, Debug)]
pub struct CounterexamplePair {
    pub a: Mat,
    pub bs: Vec<Mat>,
    pub x0: Vec<f64>,
    pub m: Mat,
    pub lambdas: Vec<Mat>,
    pub f: AdditiveGenerator,
    pub newton: NewtonConfig,
}

/// `f_i(z) = x0_i + (M z)_i + ½ Σ_j Λ^i_{jj} z_j²`.
fn quadratic_generator(x0: &[f64], m: &Mat, lambdas: &[Mat]) -> Result<AdditiveGenerator> {
    let (d_x, d_z) = m.shape();
    let components = (0..d_z)
        .map(|j| {
            PolyMap::new(1, d_x, vec![
                PolyTerm { exponent: MultiIndex::new(vec![1]), coeff: m.column(j).iter().copied().collect() },
                PolyTerm { exponent: MultiIndex::new(vec![2]), coeff: lambdas.iter().map(|l| 0.5 * l[(j, j)]).collect() },
            ])
            .map(SlotMap::Poly)
        })
        .collect::<Result<Vec<_>>>()?;
    let g = InteractionGenerator::from_terms(SlotStructure::new(d_z, 1)?, 0, d_x, components, vec![InteractionTerm {
        alpha: MultiIndex::zero(d_z),
        coeff: x0.to_vec(),
    }])?;
    AdditiveGenerator::new(g)
}

fn quad_forms(bs: &[Mat], y: &Vector) -> Vector {
    Vector::from_iterator(bs.len(), bs.iter().map(|b| 0.5 * (y.transpose() * b * y)[(0, 0)]))
}

impl CounterexamplePair {
    /// Gauss–Newton projection of `x` onto the image of `f`, started at `A(x − x0)`.
    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dx = Vector::from_iterator(x.len(), x.iter().zip(&self.x0).map(|(a, b)| a - b));
        let start = &self.a * dx;
        Ok(newton_left_inverse(&self.f, x, start.as_slice(), &self.newton)?.z)
    }

    /// `h(z) = z − A(f(z) − x0) − ½ ((f(z) − x0)ᵀ B_s (f(z) − x0))_s`.
    pub fn h(&self, z: &[f64]) -> Vec<f64> {
        let fz = self.f.eval(z);
        let y = Vector::from_iterator(fz.len(), fz.iter().zip(&self.x0).map(|(a, b)| a - b));
        let out = Vector::from_column_slice(z) - &self.a * &y - quad_forms(&self.bs, &y);
        out.as_slice().to_vec()
    }

    /// `g(x) = A(x − x0) + ½ ((x − x0)ᵀ B_s (x − x0))_s + h(φ(x))`.
    pub fn g(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = Vector::from_iterator(x.len(), x.iter().zip(&self.x0).map(|(a, b)| a - b));
        let h = Vector::from_vec(self.h(&self.phi(x)?));
        Ok((&self.a * &y + quad_forms(&self.bs, &y) + h).as_slice().to_vec())
    }

    pub fn left_inverse(&self) -> CounterexampleInverse<'_> {
        CounterexampleInverse(self)
    }
}

/// `g` of a [`CounterexamplePair`] as a smooth map; failed projections give NaN.
pub struct CounterexampleInverse<'a>(&'a CounterexamplePair);

impl SmoothMap for CounterexampleInverse<'_> {
    fn input_dim(&self) -> usize {
        self.0.a.ncols()
    }
    fn output_dim(&self) -> usize {
        self.0.a.nrows()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.g(x).unwrap_or_else(|_| vec![f64::NAN; self.output_dim()])
    }
}

pub fn build_counterexample(a: &Mat, bs: &[Mat], x0: &[f64], opts: &ConstructOptions) -> Result<CounterexamplePair> {
    if x0.len() != a.ncols() {
        return Err(Error::Dimension { context: "base point", expected: a.ncols(), got: x0.len() });
    }
    let m = construct_m(a, bs, opts)?;
    let ds: Vec<Mat> = bs.iter().map(|b| {
        let full = m.transpose() * b * &m;
        Mat::from_diagonal(&full.diagonal())
    }).collect();
    let lambdas = solve_lambda(a, &ds)?;
    let f = quadratic_generator(x0, &m, &lambdas)?;
    Ok(CounterexamplePair { a: a.clone(), bs: bs.to_vec(), x0: x0.to_vec(), m, lambdas, f, newton: NewtonConfig::default() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterexampleConfig {
    pub ball_radius: f64,
    pub ball_samples: usize,
    pub seed: u64,
    pub identity_tol: f64,
    pub offdiag_tol: f64,
    pub jacobian_tol: f64,
    pub hessian_tol: f64,
    pub roundtrip_tol: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            ball_radius: 0.1,
            ball_samples: 50,
            seed: 0,
            identity_tol: 1e-8,
            offdiag_tol: 1e-8,
            jacobian_tol: 1e-3,
            hessian_tol: 1e-3,
            roundtrip_tol: 1e-8,
        }
    }
}

fn fd_derivatives(pair: &CounterexamplePair, h: f64) -> Result<(Mat, Vec<Mat>)> {
    let g = pair.left_inverse();
    let steps = FdSteps { first: h, higher: h };
    let dg = jacobian(&g, &pair.x0, Scheme::CentralDifference, &steps)?;
    let d2g = hessians(&g, &pair.x0, Scheme::CentralDifference, &steps)?;
    Ok((dg, d2g))
}

/// Re-checks `A M = Id` and diagonality, then verifies by finite differences
/// that `Dg(x0) = A`, `D²g_l(x0) = B_l`, and that `g ∘ f = id` on a ball.
pub fn verify_counterexample(pair: &CounterexamplePair, cfg: &CounterexampleConfig) -> Result<TheoryCertificate> {
    let (d_z, d_x) = pair.a.shape();
    let am = linalg::max_abs(&(&pair.a * &pair.m - Mat::identity(d_z, d_z)));
    let mbm = pair.bs.iter().map(|b| linalg::max_offdiag_abs(&(pair.m.transpose() * b * &pair.m))).fold(0.0, f64::max);

    let x0_norm = pair.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-3 * (1.0 + x0_norm);
    let (dg, d2g) = match fd_derivatives(pair, h) {
        Err(Error::NonFinite { .. }) => fd_derivatives(pair, h / 2.0)?,
        other => other?,
    };
    let jac_rel = (dg - &pair.a).norm() / pair.a.norm();
    let hess_rel = d2g.iter().zip(&pair.bs).map(|(h, b)| (h - b).norm() / (1.0 + b.norm())).fold(0.0, f64::max);

    let mut r = rng::stream(cfg.seed, 0);
    let mut roundtrip = 0.0f64;
    for _ in 0..cfg.ball_samples {
        let dir: Vec<f64> = (0..d_z).map(|_| r.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let radius = cfg.ball_radius * r.random::<f64>().powf(1.0 / d_z as f64);
        let z: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
        let back = pair.g(&pair.f.eval(&z))?;
        let err = back.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        roundtrip = roundtrip.max(err);
    }
    Ok(TheoryCertificate::new(
        "counterexample",
        cert_input! { "d_z" => d_z, "d_x" => d_x, "fd_step" => h },
        vec![
            Residual::at_most("am_identity", am, cfg.identity_tol),
            Residual::at_most("mbm_offdiag", mbm, cfg.offdiag_tol),
            Residual::at_most("jacobian_relative", jac_rel, cfg.jacobian_tol),
            Residual::at_most("hessian_relative", hess_rel, cfg.hessian_tol),
            Residual::at_most("roundtrip", roundtrip, cfg.roundtrip_tol),
        ],
    ))
}

/// The instance with `A_{11} = A_{22} = 1`, `(B_1)_{12} = (B_1)_{21} = 1`
/// and every other entry zero, for which no `M` exists.
pub fn adversarial_instance(d_x: usize) -> (Mat, Vec<Mat>) {
    let mut a = Mat::zeros(2, d_x);
    a[(0, 0)] = 1.0;
    a[(1, 1)] = 1.0;
    let mut b1 = Mat::zeros(d_x, d_x);
    b1[(0, 1)] = 1.0;
    b1[(1, 0)] = 1.0;
    (a, vec![b1, Mat::zeros(d_x, d_x)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lambda() {
        let l = solve_lambda(&Mat::from_element(1, 1, 2.0), &[Mat::from_element(1, 1, 4.0)]).unwrap();
        assert!((l[0][(0, 0)] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_targets_give_zero_lambda() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0]);
        let l = solve_lambda(&a, &[Mat::zeros(2, 2), Mat::zeros(2, 2)]).unwrap();
        assert!(l.iter().all(|m| m.abs().max() == 0.0));
    }

    #[test]
    fn single_latent_m() {
        let a = Mat::from_row_slice(1, 2, &[2.0, 1.0]);
        let b = Mat::from_row_slice(2, 2, &[1.0, 3.0, 3.0, -1.0]);
        let m = construct_m(&a, &[b], &ConstructOptions::default()).unwrap();
        assert!(((&a * &m)[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adversarial_is_infeasible() {
        let (a, bs) = adversarial_instance(8);
        assert!(matches!(construct_m(&a, &bs, &ConstructOptions::default()), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn below_cubic_is_rejected() {
        let a = Mat::from_element(2, 4, 1.0);
        let bs = vec![Mat::zeros(4, 4), Mat::zeros(4, 4)];
        assert!(matches!(construct_m(&a, &bs, &ConstructOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn linear_case_is_exact() {
        // Orthonormal rows, zero Hessians: f is linear and g = A(x − x0).
        let mut a = Mat::zeros(2, 8);
        a[(0, 0)] = 1.0;
        a[(1, 3)] = 1.0;
        let bs = vec![Mat::zeros(8, 8), Mat::zeros(8, 8)];
        let x0 = vec![0.5; 8];
        let pair = build_counterexample(&a, &bs, &x0, &ConstructOptions::default());
        let p = pair.unwrap();
        assert!(p.lambdas.iter().all(|l| l.abs().max() < 1e-12));
        let x = p.f.eval(&[0.03, -0.02]);
        let g = p.g(&x).unwrap();
        assert!((g[0] - 0.03).abs() < 1e-12 && (g[1] + 0.02).abs() < 1e-12);
        let cert = verify_counterexample(&p, &CounterexampleConfig::default()).unwrap();
        assert!(cert.passed(), "{cert:?}");
    }
}
