//! Scalar training objectives and their exact parameter gradients.
//!
//! All objectives are means over the supplied samples and are meant to be
//! maximized, except the regression losses, whose returned gradient is
//! already the descent direction.

use crate::approx::{ForwardCache, Gradients, Mlp};
use crate::error::ApproxError;

/// Log-softmax of a logit vector.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Entropy of the categorical distribution and its gradient in logit space.
fn entropy_and_grad(log_probs: &[f64]) -> (f64, Vec<f64>) {
    let h: f64 = -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>();
    let grad = log_probs.iter().map(|lp| -lp.exp() * (lp + h)).collect();
    (h, grad)
}

/// One on-policy sample for a policy-gradient surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub features: Vec<f64>,
    pub action: usize,
    pub advantage: f64,
    /// Log-probability of `action` under the policy that collected it.
    pub old_log_prob: f64,
}

/// Value of a surrogate plus its gradient with respect to the actor.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    pub objective: f64,
    pub entropy: f64,
    pub gradient: Gradients,
    /// Forward caches, kept for curvature statistics.
    pub caches: Vec<ForwardCache>,
}

fn check_nonempty(n: usize) -> Result<(), ApproxError> {
    if n == 0 {
        return Err(ApproxError::Dimension { context: "surrogate batch", expected: 1, actual: 0 });
    }
    Ok(())
}

/// `mean[log π(a|s)·A] + entropy_coef·mean[H(π(·|s))]`.
pub fn policy_gradient_surrogate(
    actor: &Mlp,
    samples: &[PolicySample],
    entropy_coef: f64,
) -> Result<SurrogateEval, ApproxError> {
    check_nonempty(samples.len())?;
    let n = samples.len() as f64;
    let mut gradient = Gradients::zeros_like(actor);
    let mut objective = 0.0;
    let mut entropy = 0.0;
    let mut caches = Vec::with_capacity(samples.len());
    for s in samples {
        let cache = actor.forward(&s.features)?;
        let log_probs = log_softmax(&cache.output);
        let (h, h_grad) = entropy_and_grad(&log_probs);
        objective += log_probs[s.action] * s.advantage + entropy_coef * h;
        entropy += h;
        let out_grad: Vec<f64> = log_probs
            .iter()
            .enumerate()
            .map(|(j, lp)| {
                let indicator = if j == s.action { 1.0 } else { 0.0 };
                s.advantage * (indicator - lp.exp()) + entropy_coef * h_grad[j]
            })
            .collect();
        actor.backward_into(&cache, &out_grad, 1.0 / n, &mut gradient)?;
        caches.push(cache);
    }
    Ok(SurrogateEval { objective: objective / n, entropy: entropy / n, gradient, caches })
}

/// Per-sample clipped term `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// `mean[min(r·A, clip(r)·A)] + entropy_coef·mean[H]` with
/// `r = π(a|s) / π_old(a|s)` evaluated in log space.
pub fn clipped_surrogate(
    actor: &Mlp,
    samples: &[PolicySample],
    clip_epsilon: f64,
    entropy_coef: f64,
) -> Result<SurrogateEval, ApproxError> {
    check_nonempty(samples.len())?;
    let n = samples.len() as f64;
    let mut gradient = Gradients::zeros_like(actor);
    let mut objective = 0.0;
    let mut entropy = 0.0;
    let mut caches = Vec::with_capacity(samples.len());
    for s in samples {
        let cache = actor.forward(&s.features)?;
        let log_probs = log_softmax(&cache.output);
        let (h, h_grad) = entropy_and_grad(&log_probs);
        let ratio = (log_probs[s.action] - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let term = clipped_term(ratio, s.advantage, clip_epsilon);
        objective += term + entropy_coef * h;
        entropy += h;
        // The ratio gradient flows only where the unclipped branch is the minimum.
        let ratio_active = unclipped <= term;
        let out_grad: Vec<f64> = log_probs
            .iter()
            .enumerate()
            .map(|(j, lp)| {
                let indicator = if j == s.action { 1.0 } else { 0.0 };
                let pg = if ratio_active { s.advantage * ratio * (indicator - lp.exp()) } else { 0.0 };
                pg + entropy_coef * h_grad[j]
            })
            .collect();
        actor.backward_into(&cache, &out_grad, 1.0 / n, &mut gradient)?;
        caches.push(cache);
    }
    Ok(SurrogateEval { objective: objective / n, entropy: entropy / n, gradient, caches })
}

/// Regression of a scalar head toward targets.
#[derive(Debug, Clone)]
pub struct RegressionEval {
    /// `½·mean[(target − prediction)²]`
    pub loss: f64,
    /// Descent direction `mean[(target − prediction)·∇prediction]`.
    pub direction: Gradients,
    pub caches: Vec<ForwardCache>,
}

/// Squared-error regression of output `head` toward `targets`.
pub fn regression(
    net: &Mlp,
    inputs: &[Vec<f64>],
    heads: &[usize],
    targets: &[f64],
) -> Result<RegressionEval, ApproxError> {
    check_nonempty(inputs.len())?;
    let n = inputs.len() as f64;
    let mut direction = Gradients::zeros_like(net);
    let mut loss = 0.0;
    let mut caches = Vec::with_capacity(inputs.len());
    let mut out_grad = vec![0.0; net.output_dim()];
    for ((x, &head), &target) in inputs.iter().zip(heads).zip(targets) {
        let cache = net.forward(x)?;
        let err = target - cache.output[head];
        loss += 0.5 * err * err;
        out_grad.iter_mut().for_each(|g| *g = 0.0);
        out_grad[head] = err;
        net.backward_into(&cache, &out_grad, 1.0 / n, &mut direction)?;
        caches.push(cache);
    }
    Ok(RegressionEval { loss: loss / n, direction, caches })
}
