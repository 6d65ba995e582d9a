use serde::{Deserialize, Serialize};

use super::network::{Activation, Network};
use super::tape::{Tape, Var};
use crate::compfun::generator::{SlotStructure, SmoothMap};
use crate::compfun::jet::{Jet3, Scalar};
use crate::compfun::multi_index::{enumerate_multi_indices, MultiIndex};
use crate::error::{Error, Result};
use crate::linalg::{serde_mat, Mat};
use crate::rng;

/// Which monomials `z^α`, `|α| ≤ degree`, the interaction table carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionTable {
    /// Every monomial, including the constant and single-slot ones.
    #[default]
    Full,
    /// Only monomials whose support meets at least two slots. Single-slot
    /// terms are already representable by the slot networks.
    Cross,
}

pub fn table_indices(slots: SlotStructure, degree: u32, table: InteractionTable) -> Result<Vec<MultiIndex>> {
    let all = enumerate_multi_indices(slots.latent_dim(), degree)?;
    Ok(match table {
        InteractionTable::Full => all,
        InteractionTable::Cross => all
            .into_iter()
            .filter(|a| {
                let mut touched: Vec<usize> = a.support().into_iter().map(|i| slots.slot_of(i)).collect();
                touched.dedup();
                touched.len() >= 2
            })
            .collect(),
    })
}

/// Decoder with the structure of an interaction generator: one network per
/// slot plus a learned dense table of polynomial interaction coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotwiseDecoder {
    slots: SlotStructure,
    degree: u32,
    #[serde(default)]
    table: InteractionTable,
    nets: Vec<Network>,
    indices: Vec<MultiIndex>,
    /// `|indices| x output_dim`, graded lexicographic rows.
    #[serde(with = "serde_mat")]
    coefficients: Mat,
}

impl SlotwiseDecoder {
    /// Slot networks `m → hidden... → d_x`; the interaction table starts at zero.
    pub fn new(
        slots: SlotStructure,
        degree: u32,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![slots.slot_dim()];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        let nets = (0..slots.slots())
            .map(|k| Network::new(&widths, activation, rng::mix(seed, k as u64)))
            .collect::<Result<Vec<_>>>()?;
        let indices = enumerate_multi_indices(slots.latent_dim(), degree)?;
        let coefficients = Mat::zeros(indices.len(), output_dim);
        Ok(SlotwiseDecoder { slots, degree, table: InteractionTable::Full, nets, indices, coefficients })
    }

    /// Drops the table rows outside `table`.
    pub fn with_table(mut self, table: InteractionTable) -> Result<Self> {
        let keep = table_indices(self.slots, self.degree, table)?;
        let rows: Vec<usize> =
            keep.iter().filter_map(|a| self.indices.iter().position(|b| b == a)).collect();
        self.coefficients = self.coefficients.select_rows(rows.iter());
        self.indices = keep;
        self.table = table;
        Ok(self)
    }

    pub fn from_parts(
        slots: SlotStructure,
        degree: u32,
        table: InteractionTable,
        nets: Vec<Network>,
        coefficients: Mat,
    ) -> Result<Self> {
        let indices = table_indices(slots, degree, table)?;
        if nets.len() != slots.slots() {
            return Err(Error::Dimension { context: "decoder slot networks", expected: slots.slots(), got: nets.len() });
        }
        let d_x = coefficients.ncols();
        for n in &nets {
            if n.input_dim() != slots.slot_dim() || n.output_dim() != d_x {
                return Err(Error::Format("decoder slot network shape mismatch".into()));
            }
        }
        if coefficients.nrows() != indices.len() {
            return Err(Error::Dimension { context: "interaction table rows", expected: indices.len(), got: coefficients.nrows() });
        }
        Ok(SlotwiseDecoder { slots, degree, table, nets, indices, coefficients })
    }

    pub fn slots(&self) -> SlotStructure {
        self.slots
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn table(&self) -> InteractionTable {
        self.table
    }

    pub fn nets(&self) -> &[Network] {
        &self.nets
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coefficients(&self) -> &Mat {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut Mat {
        &mut self.coefficients
    }

    pub fn output_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    fn forward_generic<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim()];
        for (k, net) in self.nets.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(net.forward_generic(&z[self.slots.range(k)])) {
                *o = *o + v;
            }
        }
        for (r, alpha) in self.indices.iter().enumerate() {
            let row = self.coefficients.row(r);
            if row.iter().all(|&c| c == 0.0) {
                continue;
            }
            let m = alpha.eval_scalar(z);
            for (o, &c) in out.iter_mut().zip(row.iter()) {
                *o = *o + m * c;
            }
        }
        out
    }

    fn features(&self, z: &Mat) -> Mat {
        let mut phi = Mat::zeros(z.nrows(), self.indices.len());
        for (c, alpha) in self.indices.iter().enumerate() {
            for r in 0..z.nrows() {
                let mut v = 1.0;
                for (i, &e) in alpha.exponents().iter().enumerate() {
                    if e > 0 {
                        v *= z[(r, i)].powi(e as i32);
                    }
                }
                phi[(r, c)] = v;
            }
        }
        phi
    }

    fn forward_batch(&self, z: &Mat) -> Mat {
        let mut out = self.features(z) * &self.coefficients;
        for (k, net) in self.nets.iter().enumerate() {
            let r = self.slots.range(k);
            out += net.forward_batch(&z.columns(r.start, r.len()).into_owned());
        }
        out
    }

    fn forward_tape<'t>(&self, z: Var<'t>, params: &[Var<'t>]) -> Var<'t> {
        let tape = z.tape();
        let n = z.value().nrows();
        let mut at = 0;
        let mut out: Option<Var<'t>> = None;
        for (k, net) in self.nets.iter().enumerate() {
            let count = 2 * net.layers().len();
            let r = self.slots.range(k);
            let y = net.forward_tape(z.columns(r.start, r.len()), &params[at..at + count]);
            at += count;
            out = Some(match out {
                Some(o) => o + y,
                None => y,
            });
        }
        let cols: Vec<Var<'t>> = (0..self.slots.latent_dim()).map(|i| z.columns(i, 1)).collect();
        let feats: Vec<Var<'t>> = self
            .indices
            .iter()
            .map(|alpha| {
                let mut acc: Option<Var<'t>> = None;
                for (i, &e) in alpha.exponents().iter().enumerate() {
                    for _ in 0..e {
                        acc = Some(match acc {
                            Some(a) => a * cols[i],
                            None => cols[i],
                        });
                    }
                }
                acc.unwrap_or_else(|| tape.constant(Mat::from_element(n, 1, 1.0)))
            })
            .collect();
        if feats.is_empty() {
            return out.unwrap();
        }
        let inter = tape.hcat(&feats).matmul(params[at]);
        out.unwrap() + inter
    }

    fn params(&self) -> Vec<&Mat> {
        let mut p: Vec<&Mat> = self.nets.iter().flat_map(|n| n.params()).collect();
        p.push(&self.coefficients);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p: Vec<&mut Mat> = self.nets.iter_mut().flat_map(|n| n.params_mut()).collect();
        p.push(&mut self.coefficients);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Decoder {
    Slotwise(SlotwiseDecoder),
    Dense(Network),
}

impl Decoder {
    pub fn latent_dim(&self) -> usize {
        match self {
            Decoder::Slotwise(s) => s.slots.latent_dim(),
            Decoder::Dense(n) => n.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Decoder::Slotwise(s) => s.output_dim(),
            Decoder::Dense(n) => n.output_dim(),
        }
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension { context: "decoder latent", expected: self.latent_dim(), got: z.len() });
        }
        Ok(self.forward_generic(z))
    }

    pub fn forward_generic<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        match self {
            Decoder::Slotwise(s) => s.forward_generic(z),
            Decoder::Dense(n) => n.forward_generic(z),
        }
    }

    pub fn forward_batch(&self, z: &Mat) -> Mat {
        match self {
            Decoder::Slotwise(s) => s.forward_batch(z),
            Decoder::Dense(n) => n.forward_batch(z),
        }
    }

    pub fn tape_params<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params().into_iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Decoder parameters recorded as constants, for differentiating with
    /// respect to the latent only.
    pub fn tape_constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params().into_iter().map(|p| tape.constant(p.clone())).collect()
    }

    pub fn forward_tape<'t>(&self, z: Var<'t>, params: &[Var<'t>]) -> Var<'t> {
        match self {
            Decoder::Slotwise(s) => s.forward_tape(z, params),
            Decoder::Dense(n) => n.forward_tape(z, params),
        }
    }

    pub fn params(&self) -> Vec<&Mat> {
        match self {
            Decoder::Slotwise(s) => s.params(),
            Decoder::Dense(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            Decoder::Slotwise(s) => s.params_mut(),
            Decoder::Dense(n) => n.params_mut(),
        }
    }

    /// New output `j` is old output `perm[j]`.
    pub fn permute_outputs(&mut self, perm: &[usize]) {
        match self {
            Decoder::Slotwise(s) => {
                for n in &mut s.nets {
                    n.permute_outputs(perm);
                }
                let c = s.coefficients.clone();
                for (j, &p) in perm.iter().enumerate() {
                    s.coefficients.set_column(j, &c.column(p));
                }
            }
            Decoder::Dense(n) => n.permute_outputs(perm),
        }
    }
}

impl SmoothMap for Decoder {
    fn input_dim(&self) -> usize {
        self.latent_dim()
    }
    fn output_dim(&self) -> usize {
        Decoder::output_dim(self)
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.forward_generic(z)
    }
    fn eval_jet(&self, z: &[Jet3]) -> Option<Vec<Jet3>> {
        Some(self.forward_generic(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoder() -> Decoder {
        let slots = SlotStructure::new(2, 1).unwrap();
        let mut d = SlotwiseDecoder::new(slots, 2, &[5], 3, Activation::Tanh, 11).unwrap();
        for (i, c) in d.coefficients_mut().iter_mut().enumerate() {
            *c = 0.1 * i as f64 - 0.5;
        }
        Decoder::Slotwise(d)
    }

    #[test]
    fn three_forward_paths_agree() {
        let dec = decoder();
        let z = Mat::from_row_slice(3, 2, &[0.1, 0.2, -0.5, 0.7, 1.0, -1.0]);
        let b = dec.forward_batch(&z);
        let tape = Tape::new();
        let p = dec.tape_params(&tape);
        let t = dec.forward_tape(tape.constant(z.clone()), &p);
        assert!((&*t.value() - &b).abs().max() < 1e-12);
        for r in 0..3 {
            let g = dec.forward(&[z[(r, 0)], z[(r, 1)]]).unwrap();
            for j in 0..3 {
                assert!((g[j] - b[(r, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_outputs_permutes_values() {
        let dec = decoder();
        let mut p = dec.clone();
        p.permute_outputs(&[2, 0, 1]);
        let a = dec.forward(&[0.3, -0.2]).unwrap();
        let b = p.forward(&[0.3, -0.2]).unwrap();
        assert_eq!(b, vec![a[2], a[0], a[1]]);
    }
}
