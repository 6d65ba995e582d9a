use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with one moment pair per parameter matrix.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)], cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&Mat], cfg: AdamConfig) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Adam::new(&shapes, cfg)
    }

    pub fn step(&mut self, params: Vec<&mut Mat>, grads: &[Mat], lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Cosine decay from `base` to `base * floor` over `steps` steps.
pub fn cosine_lr(base: f64, floor: f64, step: usize, steps: usize) -> f64 {
    if steps <= 1 {
        return base;
    }
    let t = step as f64 / (steps - 1) as f64;
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimises_quadratic() {
        let mut x = Mat::from_element(1, 2, 3.0);
        let mut opt = Adam::new(&[(1, 2)], AdamConfig::default());
        for _ in 0..2000 {
            let g = &x * 2.0;
            opt.step(vec![&mut x], &[g], 0.05);
        }
        assert!(x.abs().max() < 1e-3);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1.0, 0.1, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 0.1, 9, 10) - 0.1).abs() < 1e-12);
    }
}
