use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::jet::{Jet3, Scalar};
use super::multi_index::{binomial, enumerate_multi_indices, MultiIndex};
use crate::error::{Error, Result};
use crate::learnkit::network::Network;
use crate::linalg::Mat;

/// A smooth map `ℝ^input_dim → ℝ^output_dim`.
///
/// Maps that can evaluate on [`Jet3`] scalars get exact derivatives from the
/// derivative oracle; the others fall back to finite differences.
pub trait SmoothMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Vec<f64>;
    fn eval_jet(&self, _z: &[Jet3]) -> Option<Vec<Jet3>> {
        None
    }
}

/// Wraps a closure as a [`SmoothMap`] without an analytic derivative path.
pub struct FnMap<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> FnMap<F> {
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        FnMap { input_dim, output_dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> SmoothMap for FnMap<F> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        (self.f)(z)
    }
}

/// `K` slots of dimension `m` each; latent coordinates are slot-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotStructure {
    slots: usize,
    slot_dim: usize,
}

impl SlotStructure {
    pub fn new(slots: usize, slot_dim: usize) -> Result<Self> {
        if slots == 0 || slot_dim == 0 {
            return Err(Error::Config("slot count and slot dimension must be positive".into()));
        }
        Ok(SlotStructure { slots, slot_dim })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn slot_dim(&self) -> usize {
        self.slot_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.slots * self.slot_dim
    }

    pub fn slot_of(&self, coord: usize) -> usize {
        coord / self.slot_dim
    }

    pub fn range(&self, slot: usize) -> std::ops::Range<usize> {
        slot * self.slot_dim..(slot + 1) * self.slot_dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub exponent: MultiIndex,
    pub coeff: Vec<f64>,
}

/// Vector-valued polynomial `Σ_t coeff_t z^{exponent_t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyMap {
    input_dim: usize,
    output_dim: usize,
    terms: Vec<PolyTerm>,
}

impl PolyMap {
    pub fn new(input_dim: usize, output_dim: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        for t in &terms {
            if t.exponent.dim() != input_dim {
                return Err(Error::Dimension { context: "polynomial term exponent", expected: input_dim, got: t.exponent.dim() });
            }
            if t.coeff.len() != output_dim {
                return Err(Error::Dimension { context: "polynomial term coefficient", expected: output_dim, got: t.coeff.len() });
            }
        }
        Ok(PolyMap { input_dim, output_dim, terms })
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    fn eval_scalar<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim];
        for t in &self.terms {
            let m = t.exponent.eval_scalar(z);
            for (o, &c) in out.iter_mut().zip(&t.coeff) {
                *o = *o + m * c;
            }
        }
        out
    }
}

/// One slot-wise component `f^k : ℝ^m → ℝ^{d_x}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlotMap {
    Poly(PolyMap),
    Net(Network),
    /// Writes the output of `inner` into the listed observation coordinates and
    /// zeros elsewhere.
    Scattered {
        inner: Box<SlotMap>,
        coords: Vec<usize>,
        output_dim: usize,
    },
}

impl SlotMap {
    pub fn input_dim(&self) -> usize {
        match self {
            SlotMap::Poly(p) => p.input_dim,
            SlotMap::Net(n) => n.input_dim(),
            SlotMap::Scattered { inner, .. } => inner.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            SlotMap::Poly(p) => p.output_dim,
            SlotMap::Net(n) => n.output_dim(),
            SlotMap::Scattered { output_dim, .. } => *output_dim,
        }
    }

    pub(crate) fn eval_scalar<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        match self {
            SlotMap::Poly(p) => p.eval_scalar(z),
            SlotMap::Net(n) => n.forward_generic(z),
            SlotMap::Scattered { inner, coords, output_dim } => {
                let v = inner.eval_scalar(z);
                let mut out = vec![S::zero(); *output_dim];
                for (&c, x) in coords.iter().zip(v) {
                    out[c] = x;
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let SlotMap::Scattered { inner, coords, output_dim } = self {
            inner.validate()?;
            if coords.len() != inner.output_dim() {
                return Err(Error::Dimension { context: "scattered slot map coordinates", expected: inner.output_dim(), got: coords.len() });
            }
            if coords.iter().any(|&c| c >= *output_dim) {
                return Err(Error::Config("scattered slot map coordinate out of range".into()));
            }
        }
        Ok(())
    }
}

/// Coefficient vector of one interaction monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub alpha: MultiIndex,
    pub coeff: Vec<f64>,
}

/// `f(z) = Σ_k f^k(z_k) + Σ_{|α|≤n} c_α z^α`.
///
/// The interaction table is dense over every multi-index of order at most `n`,
/// stored in graded lexicographic order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteractionGenerator {
    slots: SlotStructure,
    degree: u32,
    output_dim: usize,
    components: Vec<SlotMap>,
    interaction: Vec<InteractionTerm>,
}

impl InteractionGenerator {
    /// Builds a generator from slot maps and a dense coefficient table, one row
    /// per multi-index in graded lexicographic order.
    pub fn new(
        slots: SlotStructure,
        degree: u32,
        output_dim: usize,
        components: Vec<SlotMap>,
        coefficients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let indices = enumerate_multi_indices(slots.latent_dim(), degree)?;
        if coefficients.len() != indices.len() {
            return Err(Error::Dimension { context: "interaction table rows", expected: indices.len(), got: coefficients.len() });
        }
        let interaction = indices
            .into_iter()
            .zip(coefficients)
            .map(|(alpha, coeff)| InteractionTerm { alpha, coeff })
            .collect();
        let g = InteractionGenerator { slots, degree, output_dim, components, interaction };
        g.validate()?;
        Ok(g)
    }

    /// Builds a generator from a sparse list of interaction terms; every other
    /// coefficient is zero.
    pub fn from_terms(
        slots: SlotStructure,
        degree: u32,
        output_dim: usize,
        components: Vec<SlotMap>,
        terms: Vec<InteractionTerm>,
    ) -> Result<Self> {
        let indices = enumerate_multi_indices(slots.latent_dim(), degree)?;
        let mut table = vec![vec![0.0; output_dim]; indices.len()];
        for t in terms {
            if t.alpha.order() > degree {
                return Err(Error::Config(format!(
                    "interaction term of order {} exceeds degree {degree}",
                    t.alpha.order()
                )));
            }
            let pos = indices
                .iter()
                .position(|a| *a == t.alpha)
                .ok_or(Error::Dimension { context: "interaction multi-index", expected: slots.latent_dim(), got: t.alpha.dim() })?;
            if t.coeff.len() != output_dim {
                return Err(Error::Dimension { context: "interaction coefficient", expected: output_dim, got: t.coeff.len() });
            }
            for (a, b) in table[pos].iter_mut().zip(&t.coeff) {
                *a += b;
            }
        }
        Self::new(slots, degree, output_dim, components, table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.len() != self.slots.slots() {
            return Err(Error::Dimension { context: "slot components", expected: self.slots.slots(), got: self.components.len() });
        }
        for c in &self.components {
            c.validate()?;
            if c.input_dim() != self.slots.slot_dim() {
                return Err(Error::Dimension { context: "slot component input", expected: self.slots.slot_dim(), got: c.input_dim() });
            }
            if c.output_dim() != self.output_dim {
                return Err(Error::Dimension { context: "slot component output", expected: self.output_dim, got: c.output_dim() });
            }
        }
        let indices = enumerate_multi_indices(self.slots.latent_dim(), self.degree)?;
        if indices.len() != self.interaction.len() {
            return Err(Error::Format(format!(
                "interaction table has {} rows, expected {}",
                self.interaction.len(),
                indices.len()
            )));
        }
        for (a, t) in indices.iter().zip(&self.interaction) {
            if *a != t.alpha {
                return Err(Error::Format(format!("interaction table out of order at {:?}", t.alpha)));
            }
            if t.coeff.len() != self.output_dim {
                return Err(Error::Dimension { context: "interaction coefficient", expected: self.output_dim, got: t.coeff.len() });
            }
        }
        Ok(())
    }

    pub fn slots(&self) -> SlotStructure {
        self.slots
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn latent_dim(&self) -> usize {
        self.slots.latent_dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.output_dim
    }

    pub fn components(&self) -> &[SlotMap] {
        &self.components
    }

    pub fn interaction(&self) -> &[InteractionTerm] {
        &self.interaction
    }

    pub fn interaction_mut(&mut self) -> &mut [InteractionTerm] {
        &mut self.interaction
    }

    /// Number of entries in the dense interaction table, `C(d_z + n, n)`.
    pub fn interaction_len(&self) -> usize {
        binomial(self.latent_dim() + self.degree as usize, self.degree as usize)
    }

    /// Evaluates `f(z)`.
    pub fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension { context: "generator latent", expected: self.latent_dim(), got: z.len() });
        }
        Ok(self.eval_scalar(z))
    }

    /// Evaluates `f` row-wise on an `N x d_z` matrix.
    pub fn evaluate_batch(&self, z: &Mat) -> Result<Mat> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::Dimension { context: "generator latent", expected: self.latent_dim(), got: z.ncols() });
        }
        let mut out = Mat::zeros(z.nrows(), self.output_dim);
        let mut row = vec![0.0; z.ncols()];
        for i in 0..z.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = z[(i, j)];
            }
            for (j, v) in self.eval_scalar(&row).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub(crate) fn eval_scalar<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim];
        for (k, comp) in self.components.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(comp.eval_scalar(&z[self.slots.range(k)])) {
                *o = *o + v;
            }
        }
        for t in &self.interaction {
            if t.coeff.iter().all(|&c| c == 0.0) {
                continue;
            }
            let m = t.alpha.eval_scalar(z);
            for (o, &c) in out.iter_mut().zip(&t.coeff) {
                *o = *o + m * c;
            }
        }
        out
    }
}

impl SmoothMap for InteractionGenerator {
    fn input_dim(&self) -> usize {
        self.latent_dim()
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.eval_scalar(z)
    }
    fn eval_jet(&self, z: &[Jet3]) -> Option<Vec<Jet3>> {
        Some(self.eval_scalar(z))
    }
}

/// Interaction generator with one-dimensional slots and interaction degree at
/// most one, i.e. a sum of coordinate-wise maps plus an affine term.
#[derive(Clone, Debug)]
pub struct AdditiveGenerator(InteractionGenerator);

impl AdditiveGenerator {
    pub fn new(inner: InteractionGenerator) -> Result<Self> {
        if inner.slots.slot_dim() != 1 || inner.degree > 1 {
            return Err(Error::Config(format!(
                "additive generators need slot dimension 1 and degree at most 1, got m={} n={}",
                inner.slots.slot_dim(),
                inner.degree
            )));
        }
        Ok(AdditiveGenerator(inner))
    }

    /// `f(z) = Σ_j (linear[:, j] z_j + cubic[:, j] z_j^3)`.
    pub fn cubic_linear(linear: &Mat, cubic: &Mat) -> Result<Self> {
        if linear.shape() != cubic.shape() {
            return Err(Error::Dimension { context: "cubic coefficient columns", expected: linear.ncols(), got: cubic.ncols() });
        }
        let (d_x, d_z) = linear.shape();
        let components = (0..d_z)
            .map(|j| {
                PolyMap::new(1, d_x, vec![
                    PolyTerm { exponent: MultiIndex::new(vec![1]), coeff: linear.column(j).iter().copied().collect() },
                    PolyTerm { exponent: MultiIndex::new(vec![3]), coeff: cubic.column(j).iter().copied().collect() },
                ])
                .map(SlotMap::Poly)
            })
            .collect::<Result<Vec<_>>>()?;
        let inner = InteractionGenerator::from_terms(SlotStructure::new(d_z, 1)?, 0, d_x, components, vec![])?;
        Ok(AdditiveGenerator(inner))
    }

    pub fn into_inner(self) -> InteractionGenerator {
        self.0
    }
}

impl Deref for AdditiveGenerator {
    type Target = InteractionGenerator;
    fn deref(&self) -> &InteractionGenerator {
        &self.0
    }
}

impl SmoothMap for AdditiveGenerator {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.0.output_dim
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.0.eval(z)
    }
    fn eval_jet(&self, z: &[Jet3]) -> Option<Vec<Jet3>> {
        self.0.eval_jet(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_slots(d: usize) -> Vec<SlotMap> {
        (0..d)
            .map(|j| {
                let mut c = vec![0.0; d];
                c[j] = 1.0;
                SlotMap::Poly(PolyMap::new(1, d, vec![PolyTerm { exponent: MultiIndex::new(vec![1]), coeff: c }]).unwrap())
            })
            .collect()
    }

    #[test]
    fn bilinear_interaction() {
        let slots = SlotStructure::new(2, 1).unwrap();
        let g = InteractionGenerator::from_terms(slots, 2, 2, identity_slots(2), vec![InteractionTerm {
            alpha: MultiIndex::new(vec![1, 1]),
            coeff: vec![0.0, 3.0],
        }])
        .unwrap();
        assert_eq!(g.evaluate(&[2.0, -1.0]).unwrap(), vec![2.0, -1.0 - 6.0]);
        assert_eq!(g.interaction_len(), 6);
        assert!(matches!(g.evaluate(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn additive_rejects_interactions() {
        let slots = SlotStructure::new(2, 1).unwrap();
        let g = InteractionGenerator::from_terms(slots, 2, 2, identity_slots(2), vec![]).unwrap();
        assert!(AdditiveGenerator::new(g).is_err());
    }

    #[test]
    fn cubic_linear_evaluates() {
        let lin = Mat::from_row_slice(2, 1, &[1.0, 2.0]);
        let cub = Mat::from_row_slice(2, 1, &[0.5, 0.0]);
        let g = AdditiveGenerator::cubic_linear(&lin, &cub).unwrap();
        assert_eq!(g.evaluate(&[2.0]).unwrap(), vec![2.0 + 4.0, 4.0]);
    }
}
