//! Fully connected network with a single scalar logit output.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Hidden layers
//! use the configured activation, the output layer is the identity. Batched
//! inputs are `(batch, in_dim)` matrices.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// ELU with alpha = 1.
    #[default]
    Elu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the activation.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Per-layer parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter_values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Activations retained by [`MlpNetwork::forward_cached`] for a backward pass.
#[derive(Debug, Clone)]
pub struct BatchCache {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l - 1`.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl BatchCache {
    pub fn logits(&self) -> ArrayView1<'_, f64> {
        self.activations.last().expect("non-empty cache").column(0)
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid("a network needs at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid("layer sizes must be positive"));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::invalid("the output layer must have exactly one unit"));
    }
    Ok(())
}

impl MlpNetwork {
    /// Uniform initialization in `±sqrt(1 / fan_in)` for weights and biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (1.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.uniform_in(-bound, bound));
                let bias = Array1::from_shape_simple_fn(fan_out, || rng.uniform_in(-bound, bound));
                Dense { weight, bias }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let layers = layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for pair in layers.windows(2) {
            check_dim("layer chaining", pair[0].out_dim(), pair[1].in_dim())?;
        }
        for layer in &layers {
            check_dim("bias length", layer.out_dim(), layer.bias.len())?;
        }
        let net = Self { layers, activation };
        if !net.params_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        check_dim("output layer", 1, net.layers.last().unwrap().out_dim())?;
        Ok(net)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access, used to perturb weights or set them by hand.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::out_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        check_dim("network input", self.input_dim(), input.len())?;
        check_finite("network input", input)
    }

    /// Scalar logit for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            current = dense_apply(layer, &current);
            if idx < last {
                current.iter_mut().for_each(|z| *z = self.activation.apply(*z));
            }
        }
        Ok(current[0])
    }

    /// Gradients of `upstream * logit` with respect to every parameter and
    /// to the input vector.
    pub fn backward(&self, input: &[f64], upstream: f64) -> Result<(Gradients, Vec<f64>)> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = vec![input.to_vec()];
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = dense_apply(layer, acts.last().unwrap());
            let a = if idx < last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = vec![upstream];
        for idx in (0..self.layers.len()).rev() {
            if idx < last {
                for (d, (&z, &a)) in delta.iter_mut().zip(pre[idx].iter().zip(acts[idx + 1].iter())) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let layer = &self.layers[idx];
            let prev = &acts[idx];
            let g = &mut grads.layers[idx];
            for (j, &d) in delta.iter().enumerate() {
                g.bias[j] = d;
                for (k, &p) in prev.iter().enumerate() {
                    g.weight[[j, k]] = d * p;
                }
            }
            let mut below = vec![0.0; layer.in_dim()];
            for (j, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (b, &w) in below.iter_mut().zip(layer.weight.row(j).iter()) {
                        *b += d * w;
                    }
                }
            }
            delta = below;
        }
        Ok((grads, delta))
    }

    /// Logits for every row of `inputs`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_dim("network input", self.input_dim(), inputs.ncols())?;
        let last = self.layers.len() - 1;
        let act = self.activation;
        let mut current = affine(&self.layers[0], inputs);
        if last > 0 {
            current.mapv_inplace(|v| act.apply(v));
        }
        for (idx, layer) in self.layers.iter().enumerate().skip(1) {
            current = affine(layer, current.view());
            if idx < last {
                current.mapv_inplace(|v| act.apply(v));
            }
        }
        let out = current.column(0).to_owned();
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(out)
    }

    /// Forward pass keeping everything needed by [`MlpNetwork::backward_batch`].
    pub fn forward_cached(&self, inputs: ArrayView2<'_, f64>) -> Result<BatchCache> {
        check_dim("network input", self.input_dim(), inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut activations = vec![inputs.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, activations.last().unwrap().view());
            let a = if idx < last {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(BatchCache {
            activations,
            pre_activations,
        })
    }

    /// Backward pass for `sum_i upstream[i] * logit_i`. The input gradient is
    /// only formed when requested.
    pub fn backward_batch(
        &self,
        cache: &BatchCache,
        upstream: ArrayView1<'_, f64>,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Array2<f64>>)> {
        let batch = cache.activations[0].nrows();
        check_dim("upstream gradient", batch, upstream.len())?;
        let last = self.layers.len() - 1;
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_owned().insert_axis(Axis(1));
        let mut input_grad = None;
        for idx in (0..self.layers.len()).rev() {
            if idx < last {
                let act = self.activation;
                Zip::from(&mut delta)
                    .and(&cache.pre_activations[idx])
                    .and(&cache.activations[idx + 1])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let layer = &self.layers[idx];
            let g = &mut grads.layers[idx];
            general_mat_mul(1.0, &delta.t(), &cache.activations[idx], 0.0, &mut g.weight);
            g.bias = delta.sum_axis(Axis(0));
            if idx > 0 || want_input_grad {
                let mut below = Array2::zeros((batch, layer.in_dim()));
                general_mat_mul(1.0, &delta, &layer.weight, 0.0, &mut below);
                if idx == 0 {
                    input_grad = Some(below);
                    break;
                }
                delta = below;
            }
        }
        Ok((grads, input_grad))
    }
}

fn dense_apply(layer: &Dense, input: &[f64]) -> Vec<f64> {
    layer
        .weight
        .rows()
        .into_iter()
        .zip(layer.bias.iter())
        .map(|(row, &b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

fn affine(layer: &Dense, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = Array2::zeros((inputs.nrows(), layer.out_dim()));
    general_mat_mul(1.0, &inputs, &layer.weight.t(), 0.0, &mut z);
    z += &layer.bias;
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_net(rng: &mut Rng, sizes: &[usize]) -> MlpNetwork {
        MlpNetwork::new(sizes, Activation::Elu, rng).unwrap()
    }

    /// Straight-line reimplementation of a two-layer ELU net.
    fn reference_forward(net: &MlpNetwork, x: &[f64]) -> f64 {
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let mut hidden = Vec::new();
        for j in 0..l0.out_dim() {
            let mut z = l0.bias[j];
            for k in 0..l0.in_dim() {
                z += l0.weight[[j, k]] * x[k];
            }
            hidden.push(if z > 0.0 { z } else { z.exp() - 1.0 });
        }
        let mut out = l1.bias[0];
        for k in 0..hidden.len() {
            out += l1.weight[[0, k]] * hidden[k];
        }
        out
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = MlpNetwork::zeros(&[3, 8, 8, 1], Activation::Elu).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn elu_negative_one() {
        let v = Activation::Elu.apply(-1.0);
        assert!((v - (-0.632_120_558_828_557_7)).abs() < 1e-15);
        assert_eq!(Activation::Elu.apply(2.5), 2.5);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = Rng::new(42);
        for _ in 0..20 {
            let net = random_net(&mut rng, &[4, 16, 1]);
            let x: Vec<f64> = (0..4).map(|_| rng.normal() * 2.0).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&net, &x);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = Rng::new(1);
        let net = random_net(&mut rng, &[3, 10, 10, 1]);
        let xs = Array2::from_shape_fn((7, 3), |_| rng.normal());
        let batch = net.forward_batch(xs.view()).unwrap();
        let cache = net.forward_cached(xs.view()).unwrap();
        for i in 0..7 {
            let single = net.forward(xs.row(i).as_slice().unwrap()).unwrap();
            assert!((batch[i] - single).abs() < 1e-12);
            assert!((cache.logits()[i] - single).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_net_gradients() {
        let net = MlpNetwork::zeros(&[2, 5, 5, 1], Activation::Elu).unwrap();
        let (g, gx) = net.backward(&[0.3, -0.7], 2.5).unwrap();
        let last = g.layers.len() - 1;
        assert_eq!(g.layers[last].bias[0], 2.5);
        let others: f64 = g.iter_values().map(f64::abs).sum::<f64>() - 2.5;
        assert_eq!(others, 0.0);
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(9);
        let net = random_net(&mut rng, &[3, 6, 1]);
        let (g, gx) = net.backward(&[0.1, 0.2, 0.3], 0.0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_backward_sums_single_backward() {
        let mut rng = Rng::new(5);
        let net = random_net(&mut rng, &[3, 8, 8, 1]);
        let xs = Array2::from_shape_fn((4, 3), |_| rng.normal());
        let up = array![0.5, -1.0, 2.0, 0.25];
        let cache = net.forward_cached(xs.view()).unwrap();
        let (g, gx) = net.backward_batch(&cache, up.view(), true).unwrap();
        let gx = gx.unwrap();
        let mut acc = Gradients::zeros_like(&net);
        for i in 0..4 {
            let (gi, gxi) = net.backward(xs.row(i).as_slice().unwrap(), up[i]).unwrap();
            for (a, b) in acc.layers.iter_mut().zip(gi.layers.iter()) {
                a.weight += &b.weight;
                a.bias += &b.bias;
            }
            for k in 0..3 {
                assert!((gx[[i, k]] - gxi[k]).abs() < 1e-12);
            }
        }
        for (a, b) in acc.iter_values().zip(g.iter_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = MlpNetwork::zeros(&[2, 4, 1], Activation::Elu).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(net.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(MlpNetwork::zeros(&[2, 4, 2], Activation::Elu).is_err());
        assert!(MlpNetwork::zeros(&[2], Activation::Elu).is_err());
    }

    #[test]
    fn from_layers_checks_shapes() {
        let bad = vec![Dense::zeros(2, 4), Dense::zeros(3, 1)];
        assert!(MlpNetwork::from_layers(bad, Activation::Elu).is_err());
        let good = vec![Dense::zeros(2, 4), Dense::zeros(4, 1)];
        assert_eq!(
            MlpNetwork::from_layers(good, Activation::Elu).unwrap().layer_sizes(),
            vec![2, 4, 1]
        );
    }
}
