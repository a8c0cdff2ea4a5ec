//! Kronecker-factored curvature for fully connected layers.
//!
//! Each layer's Fisher block is approximated as `A ⊗ S`, with `A` the second
//! moment of the layer inputs and `S` the second moment of the log-likelihood
//! gradient at the layer's pre-activations. Preconditioning a weight
//! gradient `G` (out x in) then costs two small solves:
//! `ΔW = (S + λI)⁻¹ G (A + λI)⁻¹`, which equals `((A+λI) ⊗ (S+λI))⁻¹ vec(G)`
//! under column stacking.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::{Gradients, LayerGradient, Mlp};
use crate::error::ApproxError;

/// How bias gradients are preconditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// Bias uses the `S` factor alone.
    #[default]
    OutputFactorOnly,
    /// Layer input is augmented with a constant 1 so bias shares `A`.
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KfacConfig {
    pub damping: f64,
    pub decay: f64,
    pub bias_mode: BiasMode,
}

impl Default for KfacConfig {
    fn default() -> Self {
        Self { damping: 1e-2, decay: 0.95, bias_mode: BiasMode::OutputFactorOnly }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFactors {
    /// Input second moment, `in x in` (or `(in+1) x (in+1)` when augmented).
    pub a: DMatrix<f64>,
    /// Pre-activation gradient second moment, `out x out`.
    pub s: DMatrix<f64>,
}

/// Samples for one statistics refresh.
///
/// `activations[i][l]` is the input of layer `l` for sample `i`.
/// `gradients` holds weighted per-layer pre-activation gradients; `S` is
/// their weighted mean, so an expectation over a model distribution can be
/// expressed with several weighted entries per sample.
#[derive(Debug, Clone, Default)]
pub struct CurvatureBatch {
    pub activations: Vec<Vec<Vec<f64>>>,
    pub gradients: Vec<(f64, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfacStats {
    pub layers: Vec<LayerFactors>,
    pub config: KfacConfig,
}

impl KfacStats {
    /// Factors initialized to the identity.
    pub fn new(net: &Mlp, config: KfacConfig) -> Self {
        let extra = usize::from(config.bias_mode == BiasMode::Augmented);
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerFactors {
                a: DMatrix::identity(l.in_dim + extra, l.in_dim + extra),
                s: DMatrix::identity(l.out_dim, l.out_dim),
            })
            .collect();
        Self { layers, config }
    }

    fn augmented(&self) -> bool {
        self.config.bias_mode == BiasMode::Augmented
    }

    /// Exponential moving update:
    /// `A ← decay·A + (1−decay)·mean(aaᵀ)`, `S ← decay·S + (1−decay)·mean(ggᵀ)`.
    pub fn update(&mut self, batch: &CurvatureBatch) -> Result<(), ApproxError> {
        let decay = self.config.decay;
        let augmented = self.augmented();
        for (l, factors) in self.layers.iter_mut().enumerate() {
            if !batch.activations.is_empty() {
                let dim = factors.a.nrows();
                let n = batch.activations.len();
                let mut x = DMatrix::<f64>::zeros(dim, n);
                for (j, sample) in batch.activations.iter().enumerate() {
                    let a = &sample[l];
                    let expected = dim - usize::from(augmented);
                    if a.len() != expected {
                        return Err(ApproxError::Dimension { context: "K-FAC activations", expected, actual: a.len() });
                    }
                    for (i, v) in a.iter().enumerate() {
                        x[(i, j)] = *v;
                    }
                    if augmented {
                        x[(dim - 1, j)] = 1.0;
                    }
                }
                let mean = (&x * x.transpose()) / n as f64;
                factors.a = &factors.a * decay + mean * (1.0 - decay);
            }
            let total_weight: f64 = batch.gradients.iter().map(|(w, _)| *w).sum();
            if total_weight > 0.0 {
                let dim = factors.s.nrows();
                let mut x = DMatrix::<f64>::zeros(dim, batch.gradients.len());
                for (j, (w, sample)) in batch.gradients.iter().enumerate() {
                    let g = &sample[l];
                    if g.len() != dim {
                        return Err(ApproxError::Dimension { context: "K-FAC gradients", expected: dim, actual: g.len() });
                    }
                    let root = w.sqrt();
                    for (i, v) in g.iter().enumerate() {
                        x[(i, j)] = root * v;
                    }
                }
                let mean = (&x * x.transpose()) / total_weight;
                factors.s = &factors.s * decay + mean * (1.0 - decay);
            }
            // keep exact symmetry against round-off
            factors.a = (&factors.a + factors.a.transpose()) * 0.5;
            factors.s = (&factors.s + factors.s.transpose()) * 0.5;
        }
        Ok(())
    }

    fn damped_cholesky(m: &DMatrix<f64>, damping: f64, layer: usize) -> Result<Cholesky<f64, Dyn>, ApproxError> {
        let n = m.nrows();
        let damped = m + DMatrix::<f64>::identity(n, n) * damping;
        damped.cholesky().ok_or(ApproxError::SingularFactor { layer })
    }

    /// Natural-gradient direction for every layer of `grads`.
    pub fn precondition(&self, grads: &Gradients) -> Result<Gradients, ApproxError> {
        if grads.layers.len() != self.layers.len() {
            return Err(ApproxError::Dimension {
                context: "K-FAC layers",
                expected: self.layers.len(),
                actual: grads.layers.len(),
            });
        }
        let damping = self.config.damping;
        let augmented = self.augmented();
        let mut out = Vec::with_capacity(grads.layers.len());
        for (l, (factors, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            let rows = factors.s.nrows();
            let cols = factors.a.nrows() - usize::from(augmented);
            if g.weights.len() != rows * cols || g.bias.len() != rows {
                return Err(ApproxError::Dimension {
                    context: "K-FAC layer gradient",
                    expected: rows * cols,
                    actual: g.weights.len(),
                });
            }
            let s_chol = Self::damped_cholesky(&factors.s, damping, l)?;
            let a_chol = Self::damped_cholesky(&factors.a, damping, l)?;
            let mut gm = DMatrix::<f64>::zeros(rows, factors.a.nrows());
            for r in 0..rows {
                for c in 0..cols {
                    gm[(r, c)] = g.weights[r * cols + c];
                }
                if augmented {
                    gm[(r, cols)] = g.bias[r];
                }
            }
            // (S+λI)⁻¹ G, then right-multiply by (A+λI)⁻¹ via the symmetric solve.
            let left = s_chol.solve(&gm);
            let delta = a_chol.solve(&left.transpose()).transpose();
            let mut weights = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    weights.push(delta[(r, c)]);
                }
            }
            let bias = if augmented {
                (0..rows).map(|r| delta[(r, cols)]).collect()
            } else {
                let b = DMatrix::from_column_slice(rows, 1, &g.bias);
                s_chol.solve(&b).iter().copied().collect()
            };
            out.push(LayerGradient { weights, bias });
        }
        let result = Gradients { layers: out };
        if !result.is_finite() {
            return Err(ApproxError::NonFinite("preconditioned gradient"));
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{Activation, Dense};

    fn layer_net(in_dim: usize, out_dim: usize) -> Mlp {
        Mlp::from_layers(vec![Dense::zeros(in_dim, out_dim, Activation::Identity)]).unwrap()
    }

    #[test]
    fn single_sample_with_zero_decay_is_outer_product() {
        let net = layer_net(2, 1);
        let mut stats = KfacStats::new(&net, KfacConfig { decay: 0.0, ..KfacConfig::default() });
        let batch = CurvatureBatch {
            activations: vec![vec![vec![1.0, 0.0]]],
            gradients: vec![(1.0, vec![vec![3.0]])],
        };
        stats.update(&batch).unwrap();
        assert_eq!(stats.layers[0].a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(stats.layers[0].s, DMatrix::from_row_slice(1, 1, &[9.0]));
    }

    #[test]
    fn unit_decay_keeps_stats() {
        let net = layer_net(2, 2);
        let mut stats = KfacStats::new(&net, KfacConfig { decay: 1.0, ..KfacConfig::default() });
        let before = stats.clone();
        let batch = CurvatureBatch {
            activations: vec![vec![vec![0.4, -2.0]]],
            gradients: vec![(1.0, vec![vec![1.0, 5.0]])],
        };
        stats.update(&batch).unwrap();
        assert_eq!(stats, before);
    }

    #[test]
    fn identity_factors_without_damping_pass_gradient_through() {
        let net = layer_net(3, 2);
        let stats = KfacStats::new(&net, KfacConfig { damping: 0.0, ..KfacConfig::default() });
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights = vec![1.0, -2.0, 3.0, 0.5, 0.25, -4.0];
        g.layers[0].bias = vec![0.7, -0.1];
        assert_eq!(stats.precondition(&g).unwrap(), g);
    }

    #[test]
    fn diagonal_factors_scale() {
        let net = layer_net(3, 2);
        let mut stats = KfacStats::new(&net, KfacConfig { damping: 0.0, ..KfacConfig::default() });
        stats.layers[0].a = DMatrix::identity(3, 3) * 2.0;
        stats.layers[0].s = DMatrix::identity(2, 2) * 4.0;
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights = vec![8.0, -16.0, 4.0, 1.0, 0.0, 2.0];
        g.layers[0].bias = vec![4.0, 8.0];
        let d = stats.precondition(&g).unwrap();
        for (x, y) in d.layers[0].weights.iter().zip(&g.layers[0].weights) {
            assert!((x - y / 8.0).abs() < 1e-15);
        }
        assert_eq!(d.layers[0].bias, vec![1.0, 2.0]);
    }

    #[test]
    fn singular_factor_without_damping_fails() {
        let net = layer_net(2, 1);
        let mut stats = KfacStats::new(&net, KfacConfig { damping: 0.0, ..KfacConfig::default() });
        stats.layers[0].a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let g = Gradients::zeros_like(&net);
        assert_eq!(stats.precondition(&g), Err(ApproxError::SingularFactor { layer: 0 }));
    }
}
