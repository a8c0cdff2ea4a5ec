use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ApproxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `s` and output `y`.
    fn derivative(self, s: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// Fully connected layer. `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }
}

/// Layer shape description, used for construction and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Input to each layer (the `a` vectors), `inputs[0]` is the network input.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer (the `s` vectors).
    pub pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Feed-forward network of [`Dense`] layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, ApproxError> {
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(ApproxError::Dimension {
                    context: "adjacent layers",
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                });
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.in_dim * layer.out_dim || layer.bias.len() != layer.out_dim {
                return Err(ApproxError::Dimension {
                    context: "layer storage",
                    expected: layer.in_dim * layer.out_dim,
                    actual: layer.weights.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Zero-initialized network with the given shapes.
    pub fn zeros(shapes: &[LayerShape]) -> Result<Self, ApproxError> {
        Self::from_layers(
            shapes
                .iter()
                .map(|s| Dense::zeros(s.in_dim, s.out_dim, s.activation))
                .collect(),
        )
    }

    /// Network with `sizes[0]` inputs, hidden layers using `hidden` and an
    /// identity output layer. Weights are drawn uniformly with variance
    /// `gain² / fan_in`; biases start at zero. The output layer is scaled by
    /// `output_gain`.
    pub fn new(sizes: &[usize], hidden: Activation, output_gain: f64, seed: u64) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let activation = if last { Activation::Identity } else { hidden };
                let mut layer = Dense::zeros(sizes[i], sizes[i + 1], activation);
                let gain = if last { output_gain } else { 1.0 };
                let limit = gain * (3.0 / sizes[i] as f64).sqrt();
                for w in &mut layer.weights {
                    *w = rng.random_range(-1.0..=1.0) * limit;
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers
            .iter()
            .map(|l| LayerShape { in_dim: l.in_dim, out_dim: l.out_dim, activation: l.activation })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), ApproxError> {
        if input.len() != self.input_dim() {
            return Err(ApproxError::Dimension {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Output only, without keeping intermediates.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.out_dim);
            for (row, b) in layer.weights.chunks_exact(layer.in_dim).zip(&layer.bias) {
                let s: f64 = row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + b;
                next.push(layer.activation.apply(s));
            }
            a = next;
        }
        Ok(a)
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, ApproxError> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_vec());
        for layer in &self.layers {
            let a = inputs.last().expect("non-empty");
            let mut s = Vec::with_capacity(layer.out_dim);
            for (row, b) in layer.weights.chunks_exact(layer.in_dim).zip(&layer.bias) {
                s.push(row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b);
            }
            let y = s.iter().map(|&v| layer.activation.apply(v)).collect();
            pre_activations.push(s);
            inputs.push(y);
        }
        let output = inputs.pop().expect("at least one layer");
        Ok(ForwardCache { inputs, pre_activations, output })
    }

    /// Accumulates `scale * d(output · output_gradient)/dθ` into `grads` and
    /// returns the per-layer gradient with respect to the pre-activations.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<Vec<f64>>, ApproxError> {
        if output_gradient.len() != self.output_dim() {
            return Err(ApproxError::Dimension {
                context: "output gradient",
                expected: self.output_dim(),
                actual: output_gradient.len(),
            });
        }
        if cache.inputs.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(ApproxError::Dimension {
                context: "forward cache",
                expected: self.layers.len(),
                actual: cache.inputs.len(),
            });
        }
        let mut pre_grads = vec![Vec::new(); self.layers.len()];
        let mut upstream = output_gradient.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let s = &cache.pre_activations[l];
            let y = if l + 1 == self.layers.len() { &cache.output } else { &cache.inputs[l + 1] };
            let ds: Vec<f64> = upstream
                .iter()
                .zip(s.iter().zip(y))
                .map(|(g, (&s, &y))| g * layer.activation.derivative(s, y))
                .collect();
            let a = &cache.inputs[l];
            let lg = &mut grads.layers[l];
            for (r, &d) in ds.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let sd = scale * d;
                let row = &mut lg.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (w, x) in row.iter_mut().zip(a) {
                    *w += sd * x;
                }
                lg.bias[r] += sd;
            }
            if l > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for (r, &d) in ds.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                upstream = next;
            }
            pre_grads[l] = ds;
        }
        Ok(pre_grads)
    }

    /// Gradient of the scalar `output · output_gradient` for one sample.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<Gradients, ApproxError> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, output_gradient, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// All parameters: per layer, weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn unflatten(&mut self, params: &[f64]) -> Result<(), ApproxError> {
        if params.len() != self.param_count() {
            return Err(ApproxError::Dimension {
                context: "flat parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter-shaped values: gradients, update directions, moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers().len()
            && self
                .layers
                .iter()
                .zip(net.layers())
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += factor * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<(), ApproxError> {
        let n = self.values().count();
        if flat.len() != n {
            return Err(ApproxError::Dimension { context: "flat gradients", expected: n, actual: flat.len() });
        }
        for (v, x) in self.values_mut().zip(flat) {
            *v = *x;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[
            LayerShape { in_dim: 3, out_dim: 4, activation: Activation::Identity },
            LayerShape { in_dim: 4, out_dim: 2, activation: Activation::Identity },
        ])
        .unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_unit() {
        let layer = Dense {
            in_dim: 1,
            out_dim: 1,
            weights: vec![2.0],
            bias: vec![1.0],
            activation: Activation::Identity,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(net.predict(&[3.0]).unwrap(), vec![7.0]);
        assert_eq!(net.forward(&[3.0]).unwrap().output, vec![7.0]);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, 1.0, 0);
        assert!(matches!(net.predict(&[1.0]), Err(ApproxError::Dimension { .. })));
        let cache = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn incompatible_layers_are_rejected() {
        let err = Mlp::from_layers(vec![
            Dense::zeros(2, 3, Activation::Tanh),
            Dense::zeros(4, 1, Activation::Identity),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn identity_layer_gradient_is_outer_product() {
        let layer = Dense {
            in_dim: 2,
            out_dim: 1,
            weights: vec![0.3, -0.7],
            bias: vec![0.1],
            activation: Activation::Identity,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let cache = net.forward(&[2.0, 5.0]).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![2.0, 5.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Mlp::new(&[4, 5, 3], Activation::Relu, 1.0, 9);
        let cache = net.forward(&[0.5, -1.0, 2.0, 0.0]).unwrap();
        assert!(net.backward(&cache, &[0.0; 3]).unwrap().is_zero());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = Mlp::new(&[11, 64, 64, 2], Activation::Tanh, 1.0, 42);
        let b = Mlp::new(&[11, 64, 64, 2], Activation::Tanh, 1.0, 42);
        let c = Mlp::new(&[11, 64, 64, 2], Activation::Tanh, 1.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }
}
