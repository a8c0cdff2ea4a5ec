use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp};
use crate::error::ApproxError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Applies update directions to a network. Directions follow the ascent
/// convention: `θ ← θ + lr · direction`, so callers negate loss gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    first_moment: Option<Gradients>,
    second_moment: Option<Gradients>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, first_moment: None, second_moment: None, steps: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Moment estimates (Adam only), for checkpointing.
    pub fn moments(&self) -> Option<(&Gradients, &Gradients)> {
        self.first_moment.as_ref().zip(self.second_moment.as_ref())
    }

    pub fn restore(&mut self, steps: u64, moments: Option<(Gradients, Gradients)>) {
        self.steps = steps;
        match moments {
            Some((m, v)) => {
                self.first_moment = Some(m);
                self.second_moment = Some(v);
            }
            None => {
                self.first_moment = None;
                self.second_moment = None;
            }
        }
    }

    pub fn step(&mut self, net: &mut Mlp, direction: &Gradients, learning_rate: f64) -> Result<(), ApproxError> {
        if !direction.matches(net) {
            return Err(ApproxError::Dimension {
                context: "optimizer direction",
                expected: net.param_count(),
                actual: direction.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum(),
            });
        }
        if !direction.is_finite() {
            return Err(ApproxError::NonFinite("update direction"));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                if learning_rate == 0.0 {
                    return Ok(());
                }
                for (layer, g) in net.layers_mut().iter_mut().zip(&direction.layers) {
                    for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *w += learning_rate * d;
                    }
                    for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                        *b += learning_rate * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let m = self.first_moment.get_or_insert_with(|| Gradients::zeros_like(net));
                let v = self.second_moment.get_or_insert_with(|| Gradients::zeros_like(net));
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((layer, g), m), v) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&direction.layers)
                    .zip(m.layers.iter_mut())
                    .zip(v.layers.iter_mut())
                {
                    adam_slice(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, learning_rate, beta1, beta2, epsilon, c1, c2);
                    adam_slice(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, learning_rate, beta1, beta2, epsilon, c1, c2);
                }
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] += lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}
