use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpNetwork};
use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }
}

fn check_shapes(net: &MlpNetwork, grads: &Gradients) -> Result<()> {
    check_dim("gradient layer count", net.layers().len(), grads.layers.len())?;
    for (p, g) in net.layers().iter().zip(&grads.layers) {
        check_dim("gradient rows", p.weight.nrows(), g.weight.nrows())?;
        check_dim("gradient cols", p.weight.ncols(), g.weight.ncols())?;
        check_dim("gradient bias", p.bias.len(), g.bias.len())?;
    }
    Ok(())
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut MlpNetwork, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    check_shapes(net, grads)?;
    check_shapes(net, &state.first_moment)?;
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first_moment.layers.iter_mut())
        .zip(state.second_moment.layers.iter_mut())
    {
        ndarray::Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}
