//! Polarization identity and the explicit additive maps whose inverses sum to
//! monomials of linear forms.

use super::certificate::{Residual, TheoryCertificate};
use crate::cert_input;
use crate::error::{Error, Result};

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Σ_{ε∈{±1}^k} (∏ε_j)(Σ_j ε_j φ_j(x))^k` against `2^k k! ∏_j φ_j(x)`.
///
/// The error at each point is relative to `max(|rhs|, 1e-4 Σ_ε |term_ε|)`,
/// so cancellation in the signed sum does not masquerade as failure.
pub fn polarization_check(forms: &[Vec<f64>], points: &[Vec<f64>], tolerance: f64) -> Result<TheoryCertificate> {
    let k = forms.len();
    if !(1..=5).contains(&k) {
        return Err(Error::Precondition(format!("polarization needs 1 to 5 forms, got {k}")));
    }
    let d = forms[0].len();
    if forms.iter().any(|f| f.len() != d) || points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension { context: "linear form", expected: d, got: points.first().map_or(d, |p| p.len()) });
    }
    let mut worst = 0.0f64;
    for x in points {
        let phi: Vec<f64> = forms.iter().map(|f| dot(f, x)).collect();
        let mut lhs = 0.0;
        let mut mag = 0.0;
        for mask in 0..(1u32 << k) {
            let mut sign = 1.0;
            let mut s = 0.0;
            for (j, p) in phi.iter().enumerate() {
                let e = if mask & (1 << j) != 0 { -1.0 } else { 1.0 };
                sign *= e;
                s += e * p;
            }
            let term = sign * s.powi(k as i32);
            lhs += term;
            mag += term.abs();
        }
        let rhs = 2f64.powi(k as i32) * factorial(k) * phi.iter().product::<f64>();
        let denom = rhs.abs().max(1e-4 * mag).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    Ok(TheoryCertificate::new(
        "polarization",
        cert_input! { "k" => k, "d" => d, "points" => points.len() },
        vec![Residual::at_most("max_relative_error", worst, tolerance)],
    ))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Step 2: the inverses of `x_1 = z_2^k + z_1, x_i = z_i` and
/// `x_1 = −(−z_2)^k − z_1, x_i = −z_i` sum to `(−2 x_2^k, 0, ..., 0)`.
pub fn monomial_step2(k: u32, points: &[Vec<f64>], tolerance: f64) -> Result<TheoryCertificate> {
    let d = points.first().map_or(0, |p| p.len());
    if d < 2 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Precondition("step 2 needs points of a common dimension d ≥ 2".into()));
    }
    let ki = k as i32;
    let forward1 = |z: &[f64]| -> Vec<f64> {
        let mut x = z.to_vec();
        x[0] = z[1].powi(ki) + z[0];
        x
    };
    let forward2 = |z: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = z.iter().map(|v| -v).collect();
        x[0] = -(-z[1]).powi(ki) - z[0];
        x
    };
    let inverse1 = |x: &[f64]| -> Vec<f64> {
        let mut z = x.to_vec();
        z[0] = x[0] - x[1].powi(ki);
        z
    };
    let inverse2 = |x: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = x.iter().map(|v| -v).collect();
        z[0] = -x[0] - x[1].powi(ki);
        z
    };
    let mut sum_err = 0.0f64;
    let mut inv_err = 0.0f64;
    for x in points {
        let (z1, z2) = (inverse1(x), inverse2(x));
        for (a, b) in forward1(&z1).iter().zip(x).chain(forward2(&z2).iter().zip(x)) {
            inv_err = inv_err.max(rel(*a, *b));
        }
        for i in 0..d {
            let predicted = if i == 0 { -2.0 * x[1].powi(ki) } else { 0.0 };
            sum_err = sum_err.max(rel(z1[i] + z2[i], predicted));
        }
    }
    Ok(TheoryCertificate::new(
        "monomial-step2",
        cert_input! { "k" => k, "d" => d, "points" => points.len() },
        vec![Residual::at_most("sum_error", sum_err, tolerance), Residual::at_most("inverse_error", inv_err, tolerance)],
    ))
}

/// Step 3: for coefficients `α` with at least two non-zero entries, the
/// inverses of two explicit additive maps sum to `2 (Σ α_i x_i)^k` in the
/// coordinate of the second non-zero coefficient and zero elsewhere.
///
/// Coordinates outside the support of `α` are negated by the second map, so
/// they cancel in the sum.
pub fn monomial_step3(k: u32, alpha: &[f64], points: &[Vec<f64>], tolerance: f64) -> Result<TheoryCertificate> {
    let d = alpha.len();
    let support: Vec<usize> = (0..d).filter(|&i| alpha[i] != 0.0).collect();
    if d < 2 || support.len() < 2 {
        return Err(Error::Precondition("step 3 needs at least two non-zero coefficients".into()));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension { context: "step 3 point", expected: d, got: points[0].len() });
    }
    let (p, q) = (support[0], support[1]);
    let rest: Vec<usize> = support[2..].to_vec();
    let ki = k as i32;
    let in_support = |i: usize| alpha[i] != 0.0;

    let forward1 = |z: &[f64]| -> Vec<f64> {
        let mut x = z.to_vec();
        let others: f64 = support.iter().filter(|&&i| i != p).map(|&i| z[i]).sum();
        x[p] = (z[p].powi(ki) + z[p] - others) / alpha[p];
        x[q] = (z[q] - z[p].powi(ki)) / alpha[q];
        for &i in &rest {
            x[i] = z[i] / alpha[i];
        }
        x
    };
    let forward2 = |z: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = z.iter().map(|v| -v).collect();
        let others: f64 = support.iter().filter(|&&i| i != p).map(|&i| z[i]).sum();
        x[p] = (-(-z[p]).powi(ki) - z[p] + others) / alpha[p];
        x[q] = (-z[q] + (-z[p]).powi(ki)) / alpha[q];
        for &i in &rest {
            x[i] = -z[i] / alpha[i];
        }
        x
    };
    let inverse1 = |x: &[f64]| -> Vec<f64> {
        let l = dot(alpha, x);
        (0..d)
            .map(|i| {
                if i == p {
                    l
                } else if i == q {
                    alpha[q] * x[q] + l.powi(ki)
                } else if in_support(i) {
                    alpha[i] * x[i]
                } else {
                    x[i]
                }
            })
            .collect()
    };
    let inverse2 = |x: &[f64]| -> Vec<f64> {
        let l = dot(alpha, x);
        (0..d)
            .map(|i| {
                if i == p {
                    -l
                } else if i == q {
                    -alpha[q] * x[q] + l.powi(ki)
                } else if in_support(i) {
                    -alpha[i] * x[i]
                } else {
                    -x[i]
                }
            })
            .collect()
    };
    let mut sum_err = 0.0f64;
    let mut inv_err = 0.0f64;
    for x in points {
        let (z1, z2) = (inverse1(x), inverse2(x));
        for (a, b) in forward1(&z1).iter().zip(x).chain(forward2(&z2).iter().zip(x)) {
            inv_err = inv_err.max(rel(*a, *b));
        }
        let l = dot(alpha, x);
        for i in 0..d {
            let predicted = if i == q { 2.0 * l.powi(ki) } else { 0.0 };
            sum_err = sum_err.max(rel(z1[i] + z2[i], predicted));
        }
    }
    Ok(TheoryCertificate::new(
        "monomial-step3",
        cert_input! { "k" => k, "alpha" => alpha, "points" => points.len() },
        vec![Residual::at_most("sum_error", sum_err, tolerance), Residual::at_most("inverse_error", inv_err, tolerance)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_polarization() {
        let c = polarization_check(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![2.0, 3.0]], 1e-12).unwrap();
        assert!(c.passed());
        let c = polarization_check(&[vec![1.0]], &[vec![-0.7]], 1e-12).unwrap();
        assert!(c.passed());
        assert!(polarization_check(&vec![vec![1.0]; 6], &[vec![1.0]], 1e-8).is_err());
    }

    #[test]
    fn step2_hand_value() {
        assert!(monomial_step2(2, &[vec![3.0, 5.0]], 1e-12).unwrap().passed());
        assert!(monomial_step2(1, &[vec![3.0, 5.0, -1.0]], 1e-12).unwrap().passed());
    }

    #[test]
    fn step3_with_gaps_in_support() {
        let pts = vec![vec![0.3, -1.2, 0.8, 2.0, -0.4]];
        let c = monomial_step3(3, &[0.0, 1.5, -0.5, 0.0, 2.0], &pts, 1e-10).unwrap();
        assert!(c.passed(), "{c:?}");
        assert!(monomial_step3(2, &[1.0, 0.0], &[vec![1.0, 1.0]], 1e-10).is_err());
    }
}
