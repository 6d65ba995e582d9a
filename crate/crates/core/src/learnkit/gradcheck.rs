//! Reverse-mode gradients against central differences.

use super::network::Network;
use crate::error::{Error, Result};

/// Relative error `‖g_ad − g_fd‖ / max(‖g_ad‖, ‖g_fd‖)` of the gradient of
/// `<cotangent, net(x)>` with respect to the input and all parameters, stacked
/// into one vector. Differences use step `h` on every coordinate.
pub fn gradient_relative_error(net: &Network, x: &[f64], cotangent: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let eval = net.apply_and_grad(x)?;
    let (dx, dp) = eval.backward(cotangent)?;
    let objective = |n: &Network, v: &[f64]| -> f64 { n.forward_generic(v).iter().zip(cotangent).map(|(a, b)| a * b).sum() };

    let mut ad: Vec<f64> = dx;
    let mut fd = Vec::with_capacity(ad.len() + net.param_count());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = objective(net, &xp);
        xp[i] = x[i] - h;
        let down = objective(net, &xp);
        xp[i] = x[i];
        fd.push((up - down) / (2.0 * h));
    }
    let mut work = net.clone();
    for (p, g) in dp.iter().enumerate() {
        ad.extend(g.iter().copied());
        for i in 0..g.len() {
            let orig = work.params()[p][i];
            work.params_mut()[p][i] = orig + h;
            let up = objective(&work, x);
            work.params_mut()[p][i] = orig - h;
            let down = objective(&work, x);
            work.params_mut()[p][i] = orig;
            fd.push((up - down) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = ad.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let scale = norm(&ad).max(norm(&fd));
    Ok(if scale == 0.0 { 0.0 } else { norm(&diff) / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learnkit::network::Activation;

    #[test]
    fn tanh_network_gradients_agree() {
        let net = Network::new(&[3, 6, 2], Activation::Tanh, 12).unwrap();
        let e = gradient_relative_error(&net, &[0.2, -0.5, 0.9], &[1.0, -0.7], 1e-5).unwrap();
        assert!(e < 1e-7, "{e}");
    }
}
