use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compfun::generator::{InteractionGenerator, InteractionTerm, SlotMap, SlotStructure};
use crate::compfun::multi_index::enumerate_multi_indices;
use crate::error::{Error, Result};
use crate::learnkit::network::{Activation, Dense, Network};
use crate::linalg::Mat;
use crate::rng::{self, Rng};

/// Scales of the random slot networks `ℝ^m → ℝ^out` with one hidden layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotNetSpec {
    pub hidden: usize,
    pub activation: Activation,
    /// Standard deviation of the first-layer weights.
    pub input_scale: f64,
    /// Standard deviation of the first-layer biases.
    pub bias_scale: f64,
}

impl Default for SlotNetSpec {
    fn default() -> Self {
        SlotNetSpec { hidden: 8, activation: Activation::Tanh, input_scale: 2.0, bias_scale: 1.0 }
    }
}

/// Random slot network; output weights have variance `1 / hidden`.
pub fn random_slot_net(spec: &SlotNetSpec, input: usize, output: usize, r: &mut Rng) -> Result<Network> {
    let w1 = Normal::new(0.0, spec.input_scale).map_err(|e| Error::Config(e.to_string()))?;
    let b1 = Normal::new(0.0, spec.bias_scale).map_err(|e| Error::Config(e.to_string()))?;
    let w2 = Normal::new(0.0, 1.0 / (spec.hidden as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let first = Dense {
        weight: Mat::from_fn(input, spec.hidden, |_, _| w1.sample(r)),
        bias: Mat::from_fn(1, spec.hidden, |_, _| b1.sample(r)),
    };
    let second = Dense { weight: Mat::from_fn(spec.hidden, output, |_, _| w2.sample(r)), bias: Mat::zeros(1, output) };
    Network::from_layers(vec![first, second], spec.activation)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionSpec {
    pub slots: usize,
    pub slot_dim: usize,
    pub degree: u32,
    pub observation_dim: usize,
    pub net: SlotNetSpec,
    /// Standard deviation of the cross-slot interaction coefficients.
    pub interaction_scale: f64,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        InteractionSpec {
            slots: 2,
            slot_dim: 1,
            degree: 2,
            observation_dim: 16,
            net: SlotNetSpec::default(),
            interaction_scale: 0.5,
        }
    }
}

/// Random generator with one slot network per slot and Gaussian coefficients
/// on every monomial that couples at least two slots.
pub fn random_interaction_generator(spec: &InteractionSpec, seed: u64) -> Result<InteractionGenerator> {
    let slots = SlotStructure::new(spec.slots, spec.slot_dim)?;
    let mut r = rng::stream(seed, 0);
    let components = (0..spec.slots)
        .map(|_| random_slot_net(&spec.net, spec.slot_dim, spec.observation_dim, &mut r).map(SlotMap::Net))
        .collect::<Result<Vec<_>>>()?;
    let coeff = Normal::new(0.0, spec.interaction_scale).map_err(|e| Error::Config(e.to_string()))?;
    let terms = enumerate_multi_indices(slots.latent_dim(), spec.degree)?
        .into_iter()
        .filter(|a| {
            let touched: std::collections::BTreeSet<usize> = a.support().into_iter().map(|c| slots.slot_of(c)).collect();
            touched.len() >= 2
        })
        .map(|alpha| InteractionTerm { alpha, coeff: (0..spec.observation_dim).map(|_| coeff.sample(&mut r)).collect() })
        .collect();
    InteractionGenerator::from_terms(slots, spec.degree, spec.observation_dim, components, terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PixelPartitionSpec {
    pub slot_dim: usize,
    /// Observation coordinates owned by each slot, in order.
    pub group_sizes: Vec<usize>,
    pub net: SlotNetSpec,
    /// Latent box used by the injectivity check.
    pub domain: (f64, f64),
    /// Lower bound on `‖φ(a) − φ(b)‖ / ‖a − b‖` over checked pairs.
    pub injectivity_tol: f64,
    pub max_attempts: usize,
}

impl Default for PixelPartitionSpec {
    fn default() -> Self {
        PixelPartitionSpec {
            slot_dim: 1,
            group_sizes: vec![8, 8],
            net: SlotNetSpec::default(),
            domain: (-1.0, 1.0),
            injectivity_tol: 1e-3,
            max_attempts: 10,
        }
    }
}

fn injective_on_samples(net: &Network, spec: &PixelPartitionSpec, r: &mut Rng) -> bool {
    let (lo, hi) = spec.domain;
    let pts: Vec<Vec<f64>> = if spec.slot_dim == 1 {
        (0..=128).map(|i| vec![lo + (hi - lo) * i as f64 / 128.0]).collect()
    } else {
        (0..128).map(|_| (0..spec.slot_dim).map(|_| r.random_range(lo..hi)).collect()).collect()
    };
    let out: Vec<Vec<f64>> = pts.iter().map(|p| net.forward_generic(p)).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dz = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dx = out[i].iter().zip(&out[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dx < spec.injectivity_tol * dz {
                return false;
            }
        }
    }
    true
}

/// Generator of interaction degree 0 where slot `k` alone drives the `k`-th
/// contiguous group of observation coordinates.
pub fn make_pixel_partition_generator(spec: &PixelPartitionSpec, seed: u64) -> Result<InteractionGenerator> {
    let k = spec.group_sizes.len();
    if k == 0 || spec.group_sizes.contains(&0) {
        return Err(Error::Config(format!("invalid group sizes {:?}", spec.group_sizes)));
    }
    let d_x: usize = spec.group_sizes.iter().sum();
    let slots = SlotStructure::new(k, spec.slot_dim)?;
    let mut components = Vec::with_capacity(k);
    let mut offset = 0;
    for (slot, &size) in spec.group_sizes.iter().enumerate() {
        let mut accepted = None;
        for attempt in 0..spec.max_attempts {
            let mut r = rng::stream(rng::mix(seed, slot as u64), attempt as u64);
            let net = random_slot_net(&spec.net, spec.slot_dim, size, &mut r)?;
            if injective_on_samples(&net, spec, &mut r) {
                accepted = Some(net);
                break;
            }
        }
        let net = accepted.ok_or_else(|| {
            Error::Config(format!("no injective map for slot {slot} after {} attempts", spec.max_attempts))
        })?;
        components.push(SlotMap::Scattered {
            inner: Box::new(SlotMap::Net(net)),
            coords: (offset..offset + size).collect(),
            output_dim: d_x,
        });
        offset += size;
    }
    InteractionGenerator::new(slots, 0, d_x, components, vec![vec![0.0; d_x]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compfun::derivative::{cross_slot_residual, FdSteps, Scheme};

    #[test]
    fn interaction_generator_has_only_cross_terms() {
        let g = random_interaction_generator(&InteractionSpec::default(), 3).unwrap();
        let nonzero: Vec<_> = g.interaction().iter().filter(|t| t.coeff.iter().any(|&c| c != 0.0)).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].alpha.exponents(), &[1, 1]);
    }

    #[test]
    fn pixel_partition_has_zero_n0_residual() {
        let g = make_pixel_partition_generator(&PixelPartitionSpec::default(), 1).unwrap();
        let r = cross_slot_residual(&g, &g.slots(), &[0.3, -0.5], 0, Scheme::Analytic, &FdSteps::default()).unwrap();
        assert_eq!(r.value(), 0.0);
    }

    #[test]
    fn single_slot_partition_is_plain_map() {
        let spec = PixelPartitionSpec { group_sizes: vec![5], ..Default::default() };
        let g = make_pixel_partition_generator(&spec, 0).unwrap();
        assert_eq!((g.slots().slots(), g.observation_dim()), (1, 5));
    }

    #[test]
    fn impossible_injectivity_errors() {
        let spec = PixelPartitionSpec { injectivity_tol: 1e9, max_attempts: 2, ..Default::default() };
        assert!(make_pixel_partition_generator(&spec, 0).is_err());
    }
}
