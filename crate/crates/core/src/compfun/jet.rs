//! Scalars that carry exact low-order partial derivatives.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Numeric type the generators and networks are generic over.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn tanh(self) -> Self;
    fn softplus(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
}

/// Truncated hyper-dual number with three independent infinitesimals.
///
/// Component `c[S]` multiplies `∏_{i∈S} ε_i` for the bit set `S`. Each `ε_i`
/// squares to zero, so seeding up to three input coordinates with distinct
/// infinitesimals yields every mixed partial up to order three exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    c: [f64; 8],
}

impl Jet3 {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; 8];
        c[0] = v;
        Jet3 { c }
    }

    /// `v + Σ_{i: bit i of mask} ε_i`.
    pub fn seeded(v: f64, mask: u8) -> Self {
        let mut j = Jet3::constant(v);
        for bit in 0..3 {
            if mask & (1 << bit) != 0 {
                j.c[1 << bit] = 1.0;
            }
        }
        j
    }

    pub fn coeff(&self, mask: u8) -> f64 {
        self.c[mask as usize]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Applies a scalar function given its value and first three derivatives at
    /// the real part.
    fn lift(self, d: [f64; 4]) -> Self {
        let mut n = self;
        n.c[0] = 0.0;
        let n2 = n * n;
        let n3 = n2 * n;
        let mut out = n * d[1] + n2 * (d[2] / 2.0) + n3 * (d[3] / 6.0);
        out.c[0] = d[0];
        out
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(mut self, rhs: Jet3) -> Jet3 {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(mut self, rhs: Jet3) -> Jet3 {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: Jet3) -> Jet3 {
        let mut out = [0.0; 8];
        for s in 0..8usize {
            if self.c[s] == 0.0 {
                continue;
            }
            for t in 0..8usize {
                if s & t == 0 {
                    out[s | t] += self.c[s] * rhs.c[t];
                }
            }
        }
        Jet3 { c: out }
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(mut self) -> Jet3 {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Add<f64> for Jet3 {
    type Output = Jet3;
    fn add(mut self, rhs: f64) -> Jet3 {
        self.c[0] += rhs;
        self
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(mut self, rhs: f64) -> Jet3 {
        for a in self.c.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Scalar for Jet3 {
    fn constant(v: f64) -> Self {
        Jet3::constant(v)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn tanh(self) -> Self {
        let t = self.c[0].tanh();
        let s = 1.0 - t * t;
        self.lift([t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)])
    }
    fn softplus(self) -> Self {
        let x = self.c[0];
        let p = sigmoid(x);
        let q = p * (1.0 - p);
        self.lift([softplus_f64(x), p, q, q * (1.0 - 2.0 * p)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn third_mixed(f: impl Fn(Jet3, Jet3) -> Jet3, x: f64, y: f64) -> (f64, f64, f64) {
        // d/dx, d2/dxdy, d3/dx2dy using the x coordinate seeded twice.
        let out = f(Jet3::seeded(x, 0b011), Jet3::seeded(y, 0b100));
        (out.coeff(0b001), out.coeff(0b101), out.coeff(0b111))
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // f = x^3 y
        let (dx, dxy, dxxy) = third_mixed(|x, y| x.powi(3) * y, 1.5, -2.0);
        assert!((dx - 3.0 * 2.25 * -2.0).abs() < 1e-12);
        assert!((dxy - 3.0 * 2.25).abs() < 1e-12);
        assert!((dxxy - 6.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn tanh_derivatives_match_finite_differences() {
        let x = 0.37;
        let j = Jet3::seeded(x, 0b111).tanh();
        let h = 1e-3;
        let f = |v: f64| v.tanh();
        let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        assert!((j.coeff(0b011) - d2).abs() < 1e-5);
        assert!((j.coeff(0b111) - d3).abs() < 1e-4);
    }

    #[test]
    fn softplus_derivatives_match_finite_differences() {
        let x = -0.8;
        let j = Jet3::seeded(x, 0b111).softplus();
        let h = 1e-3;
        let f = softplus_f64;
        let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h);
        assert!((j.coeff(0b001) - sigmoid(x)).abs() < 1e-12);
        assert!((j.coeff(0b111) - d3).abs() < 1e-5);
    }
}
