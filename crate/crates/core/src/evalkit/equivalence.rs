use serde::{Deserialize, Serialize};

use crate::compfun::generator::SlotStructure;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Invertible map of one slot's value space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlotBijection {
    /// `v ↦ A v + b` with `A` invertible (`m x m`, row-major).
    Affine { matrix: Vec<f64>, shift: Vec<f64> },
    /// Coordinate-wise `v ↦ a v + c v³ + b` with `a > 0`, `c ≥ 0`.
    Monotone { a: f64, c: f64, b: f64 },
}

fn cubic_inverse(a: f64, c: f64, y: f64) -> f64 {
    // Solve c x³ + a x = y; Cardano then Newton polish.
    let mut x = if c == 0.0 {
        y / a
    } else {
        let p = a / c;
        let q = -y / c;
        let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        (-q / 2.0 + disc).cbrt() + (-q / 2.0 - disc).cbrt()
    };
    for _ in 0..3 {
        let f = c * x * x * x + a * x - y;
        let d = 3.0 * c * x * x + a;
        x -= f / d;
    }
    x
}

impl SlotBijection {
    fn check(&self, m: usize) -> Result<()> {
        match self {
            SlotBijection::Affine { matrix, shift } => {
                if matrix.len() != m * m || shift.len() != m {
                    return Err(Error::Dimension { context: "affine slot bijection", expected: m * m, got: matrix.len() });
                }
                if Mat::from_row_slice(m, m, matrix).determinant().abs() < 1e-12 {
                    return Err(Error::Config("affine slot bijection is singular".into()));
                }
            }
            SlotBijection::Monotone { a, c, .. } => {
                if !(*a > 0.0 && *c >= 0.0) {
                    return Err(Error::Config("monotone slot bijection needs a > 0 and c ≥ 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            SlotBijection::Affine { matrix, shift } => {
                let m = v.len();
                let out = Mat::from_row_slice(m, m, matrix) * Vector::from_column_slice(v);
                out.iter().zip(shift).map(|(x, s)| x + s).collect()
            }
            SlotBijection::Monotone { a, c, b } => v.iter().map(|x| a * x + c * x * x * x + b).collect(),
        }
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        match self {
            SlotBijection::Affine { matrix, shift } => {
                let m = v.len();
                let rhs = Vector::from_iterator(m, v.iter().zip(shift).map(|(x, s)| x - s));
                let lu = Mat::from_row_slice(m, m, matrix).lu();
                lu.solve(&rhs).map(|x| x.iter().copied().collect()).unwrap_or_else(|| vec![f64::NAN; m])
            }
            SlotBijection::Monotone { a, c, b } => v.iter().map(|y| cubic_inverse(*a, *c, y - b)).collect(),
        }
    }
}

/// `h_π`: ground-truth slot `k` is sent through `maps[k]` and placed at
/// position `perm[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotEquivalence {
    pub perm: Vec<usize>,
    pub maps: Vec<SlotBijection>,
}

impl SlotEquivalence {
    pub fn new(perm: Vec<usize>, maps: Vec<SlotBijection>, slots: &SlotStructure) -> Result<Self> {
        let k = slots.slots();
        let mut seen = vec![false; k];
        if perm.len() != k || maps.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Config(format!("{perm:?} is not a permutation of {k} slots with one map each")));
        }
        for m in &maps {
            m.check(slots.slot_dim())?;
        }
        Ok(SlotEquivalence { perm, maps })
    }

    pub fn apply(&self, slots: &SlotStructure, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for k in 0..slots.slots() {
            let v = self.maps[k].apply(&z[slots.range(k)]);
            out[slots.range(self.perm[k])].copy_from_slice(&v);
        }
        out
    }

    pub fn invert(&self, slots: &SlotStructure, zh: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; zh.len()];
        for k in 0..slots.slots() {
            let v = self.maps[k].invert(&zh[slots.range(self.perm[k])]);
            out[slots.range(k)].copy_from_slice(&v);
        }
        out
    }

    /// Row-wise [`SlotEquivalence::apply`].
    pub fn apply_rows(&self, slots: &SlotStructure, z: &Mat) -> Mat {
        let mut out = Mat::zeros(z.nrows(), z.ncols());
        for i in 0..z.nrows() {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            for (j, v) in self.apply(slots, &row).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let s = SlotStructure::new(3, 2).unwrap();
        let eq = SlotEquivalence::new(
            vec![2, 0, 1],
            vec![
                SlotBijection::Affine { matrix: vec![2.0, 1.0, 0.0, -1.0], shift: vec![0.5, 0.0] },
                SlotBijection::Monotone { a: 0.5, c: 2.0, b: -1.0 },
                SlotBijection::Monotone { a: 1.5, c: 0.0, b: 0.25 },
            ],
            &s,
        )
        .unwrap();
        let z = [0.3, -0.7, 1.2, 0.1, -2.0, 0.9];
        let back = eq.invert(&s, &eq.apply(&s, &z));
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_permutation() {
        let s = SlotStructure::new(2, 1).unwrap();
        let id = SlotBijection::Monotone { a: 1.0, c: 0.0, b: 0.0 };
        assert!(SlotEquivalence::new(vec![0, 0], vec![id.clone(), id], &s).is_err());
    }
}
