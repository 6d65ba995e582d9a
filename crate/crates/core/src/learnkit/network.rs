use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::compfun::generator::SmoothMap;
use crate::compfun::jet::{Jet3, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{serde_mat, Mat};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Softplus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`.
    #[serde(with = "serde_mat")]
    pub weight: Mat,
    /// `1 x outputs`.
    #[serde(with = "serde_mat")]
    pub bias: Mat,
}

/// Fully connected network; the activation is applied after every layer but
/// the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    widths: Vec<usize>,
    activation: Activation,
    layers: Vec<Dense>,
}

impl Network {
    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Network::zeros(widths, activation)?;
        let mut r = rng::stream(seed, 0);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.nrows() as f64).sqrt();
            for w in layer.weight.iter_mut() {
                *w = r.random_range(-bound..bound);
            }
            for b in layer.bias.iter_mut() {
                *b = r.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid network widths {widths:?}")));
        }
        let layers =
            widths.windows(2).map(|w| Dense { weight: Mat::zeros(w[0], w[1]), bias: Mat::zeros(1, w[1]) }).collect();
        Ok(Network { widths: widths.to_vec(), activation, layers })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut widths = vec![layers[0].weight.nrows()];
        for l in &layers {
            if l.weight.nrows() != *widths.last().unwrap() || l.bias.shape() != (1, l.weight.ncols()) {
                return Err(Error::Format("inconsistent layer shapes".into()));
            }
            widths.push(l.weight.ncols());
        }
        Ok(Network { widths, activation, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Parameters in the order weight, bias, weight, bias, ...
    pub fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn act<S: Scalar>(&self, x: S) -> S {
        match self.activation {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
        }
    }

    pub fn forward_generic<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut h: Vec<S> = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next: Vec<S> = layer.bias.iter().map(|&b| S::constant(b)).collect();
            for (i, &hi) in h.iter().enumerate() {
                for (j, n) in next.iter_mut().enumerate() {
                    let w = layer.weight[(i, j)];
                    if w != 0.0 {
                        *n = *n + hi * w;
                    }
                }
            }
            if li != last {
                for n in next.iter_mut() {
                    *n = self.act(*n);
                }
            }
            h = next;
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { context: "network input", expected: self.input_dim(), got: x.len() });
        }
        Ok(self.forward_generic(x))
    }

    /// Row-wise forward pass on an `N x input_dim` matrix.
    pub fn forward_batch(&self, x: &Mat) -> Mat {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = &h * &layer.weight;
            for j in 0..next.ncols() {
                next.column_mut(j).add_scalar_mut(layer.bias[(0, j)]);
            }
            if li != last {
                match self.activation {
                    Activation::Tanh => next.apply(|v| *v = v.tanh()),
                    Activation::Softplus => next.apply(|v| *v = crate::compfun::jet::softplus_f64(*v)),
                }
            }
            h = next;
        }
        h
    }

    /// Records the parameters on `tape`, in [`Network::params`] order.
    pub fn tape_params<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params().into_iter().map(|p| tape.param(p.clone())).collect()
    }

    pub fn forward_tape<'t>(&self, x: Var<'t>, params: &[Var<'t>]) -> Var<'t> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for li in 0..self.layers.len() {
            h = h.matmul(params[2 * li]).add_row(params[2 * li + 1]);
            if li != last {
                h = match self.activation {
                    Activation::Tanh => h.tanh(),
                    Activation::Softplus => h.softplus(),
                };
            }
        }
        h
    }

    /// Forward pass that keeps the tape for a later vector-Jacobian product.
    pub fn apply_and_grad(&self, input: &[f64]) -> Result<NetworkEval> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension { context: "network input", expected: self.input_dim(), got: input.len() });
        }
        let tape = Tape::new();
        let (output, x_idx, out_idx, param_idx) = {
            let x = tape.param(Mat::from_row_slice(1, input.len(), input));
            let params = self.tape_params(&tape);
            let out = self.forward_tape(x, &params);
            let output = out.value().iter().copied().collect();
            (output, x.index(), out.index(), params.iter().map(|p| p.index()).collect())
        };
        Ok(NetworkEval { output, shapes: self.params().iter().map(|p| p.shape()).collect(), tape, x_idx, out_idx, param_idx })
    }

    /// Permutes output coordinates: new output `j` is old output `perm[j]`.
    pub fn permute_outputs(&mut self, perm: &[usize]) {
        let last = self.layers.last_mut().unwrap();
        let w = last.weight.clone();
        let b = last.bias.clone();
        for (j, &p) in perm.iter().enumerate() {
            last.weight.set_column(j, &w.column(p));
            last.bias[(0, j)] = b[(0, p)];
        }
    }
}

impl SmoothMap for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        Network::output_dim(self)
    }
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.forward_generic(z)
    }
    fn eval_jet(&self, z: &[Jet3]) -> Option<Vec<Jet3>> {
        Some(self.forward_generic(z))
    }
}

/// Output of [`Network::apply_and_grad`].
pub struct NetworkEval {
    pub output: Vec<f64>,
    shapes: Vec<(usize, usize)>,
    tape: Tape,
    x_idx: usize,
    out_idx: usize,
    param_idx: Vec<usize>,
}

impl NetworkEval {
    /// Gradients of `<cotangent, output>` with respect to the input and to
    /// every parameter.
    pub fn backward(&self, cotangent: &[f64]) -> Result<(Vec<f64>, Vec<Mat>)> {
        if cotangent.len() != self.output.len() {
            return Err(Error::Dimension { context: "cotangent", expected: self.output.len(), got: cotangent.len() });
        }
        let seed = Mat::from_row_slice(1, cotangent.len(), cotangent);
        let g = self.tape.backward_from(self.tape.var(self.out_idx), seed);
        let dx = g.get_index(self.x_idx, (1, self.shapes[0].0)).iter().copied().collect();
        let dp = self.param_idx.iter().zip(&self.shapes).map(|(&i, &s)| g.get_index(i, s)).collect();
        Ok((dx, dp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_generic_and_tape_agree() {
        let net = Network::new(&[3, 5, 2], Activation::Tanh, 4).unwrap();
        let x = Mat::from_row_slice(2, 3, &[0.1, 0.2, -0.3, 1.0, -1.0, 0.5]);
        let b = net.forward_batch(&x);
        for r in 0..2 {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let g = net.forward(&row).unwrap();
            for j in 0..2 {
                assert!((g[j] - b[(r, j)]).abs() < 1e-12);
            }
        }
        let tape = Tape::new();
        let p = net.tape_params(&tape);
        let out = net.forward_tape(tape.constant(x), &p);
        assert!((&*out.value() - &b).abs().max() < 1e-12);
    }

    #[test]
    fn apply_and_grad_matches_fd() {
        let net = Network::new(&[2, 4, 3], Activation::Softplus, 9).unwrap();
        let x = [0.3, -0.8];
        let c = [1.0, -2.0, 0.5];
        let eval = net.apply_and_grad(&x).unwrap();
        let (dx, _) = eval.backward(&c).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let f = |v: &[f64]| net.forward(v).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(Network::new(&[3], Activation::Tanh, 0).is_err());
        assert!(Network::new(&[3, 0, 1], Activation::Tanh, 0).is_err());
    }
}
