use serde::{Deserialize, Serialize};

use super::jet::Scalar;
use crate::error::{Error, Result};

/// Exponent vector `α ∈ ℕ^d` of a monomial `z^α = ∏_i z_i^{α_i}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit index `e_i` in dimension `dim`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `|α| = Σ α_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                context: "multi-index addition",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// Evaluates `z^α` with the convention `0^0 = 1`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                context: "monomial evaluation",
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(self.eval_scalar(z))
    }

    pub(crate) fn eval_scalar<S: Scalar>(&self, z: &[S]) -> S {
        let mut acc = S::constant(1.0);
        for (&e, &v) in self.0.iter().zip(z) {
            if e > 0 {
                acc = acc * v.powi(e);
            }
        }
        acc
    }

    /// Indices of the coordinates with a non-zero exponent.
    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, _)| i).collect()
    }
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All multi-indices of dimension `dim` with order at most `max_order`, in
/// graded lexicographic order (order ascending, then larger leading exponents
/// first). The list has `C(dim + max_order, max_order)` entries.
pub fn enumerate_multi_indices(dim: usize, max_order: u32) -> Result<Vec<MultiIndex>> {
    if dim == 0 {
        return Err(Error::Config("multi-index dimension must be positive".into()));
    }
    let mut out = Vec::with_capacity(binomial(dim + max_order as usize, max_order as usize));
    let mut buf = vec![0u32; dim];
    for p in 0..=max_order {
        fill(&mut buf, 0, p, &mut out);
    }
    Ok(out)
}

fn fill(buf: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a;
        fill(buf, pos + 1, remaining - a, out);
    }
    buf[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let ix = enumerate_multi_indices(2, 1).unwrap();
        assert_eq!(
            ix,
            vec![MultiIndex::new(vec![0, 0]), MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![0, 1])]
        );
        let ix = enumerate_multi_indices(2, 2).unwrap();
        assert_eq!(ix[3..].to_vec(), vec![
            MultiIndex::new(vec![2, 0]),
            MultiIndex::new(vec![1, 1]),
            MultiIndex::new(vec![0, 2])
        ]);
    }

    #[test]
    fn counts_match_binomial() {
        for d in 1..5 {
            for n in 0..4 {
                assert_eq!(enumerate_multi_indices(d, n).unwrap().len(), binomial(d + n as usize, n as usize));
            }
        }
    }

    #[test]
    fn monomial_eval() {
        let a = MultiIndex::new(vec![2, 0, 1]);
        assert_eq!(a.eval(&[3.0, 0.0, -1.0]).unwrap(), -9.0);
        assert_eq!(MultiIndex::zero(2).eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(a.eval(&[1.0]), Err(Error::Dimension { .. })));
    }
}
