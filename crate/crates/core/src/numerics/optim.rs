//! RMSprop: per-parameter running mean of squared gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Optimizer state: one squared-gradient accumulator per parameter tensor,
/// in the same order as the parameter list it was built for.
#[derive(Debug, Clone)]
pub struct RmspropState {
    acc: Vec<Vec<f64>>,
    pub step: u64,
}

impl RmspropState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            acc: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }
}

/// Hyperparameters; `alpha` is the accumulator decay.
#[derive(Debug, Clone, Copy)]
pub struct RmspropConfig {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        // Decay and epsilon follow the common convention; the learning rate
        // matches the training default and is overridden per run.
        Self {
            lr: 5e-4,
            alpha: 0.99,
            eps: 1e-8,
        }
    }
}

/// One update: `acc <- alpha*acc + (1-alpha)*g^2; p <- p - lr*g/(sqrt(acc)+eps)`.
///
/// Returns the updated parameters; the state is advanced in place.
pub fn rmsprop_step(
    params: &[&Tensor],
    grads: &[&Tensor],
    state: &mut RmspropState,
    cfg: &RmspropConfig,
) -> Result<Vec<Tensor>> {
    if cfg.lr <= 0.0 {
        return Err(Error::NonPositive {
            what: "learning rate",
            value: cfg.lr,
        });
    }
    if cfg.alpha <= 0.0 || cfg.alpha >= 1.0 {
        return Err(Error::OutOfRange {
            what: "rmsprop alpha",
            range: "(0, 1)",
            value: cfg.alpha,
        });
    }
    if cfg.eps <= 0.0 {
        return Err(Error::NonPositive {
            what: "rmsprop eps",
            value: cfg.eps,
        });
    }
    if params.len() != grads.len() || params.len() != state.acc.len() {
        return Err(Error::InvalidShape {
            op: "rmsprop_step",
            shape: vec![params.len(), grads.len(), state.acc.len()],
            reason: "parameter, gradient and state counts differ".into(),
        });
    }

    let mut updated = Vec::with_capacity(params.len());
    for ((p, g), acc) in params.iter().zip(grads).zip(state.acc.iter_mut()) {
        if p.shape() != g.shape() || p.numel() != acc.len() {
            return Err(Error::ShapeMismatch {
                op: "rmsprop_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        let mut out = p.to_vec();
        for ((v, a), &gi) in out.iter_mut().zip(acc.iter_mut()).zip(g.data()) {
            *a = cfg.alpha * *a + (1.0 - cfg.alpha) * gi * gi;
            *v -= cfg.lr * gi / (a.sqrt() + cfg.eps);
        }
        updated.push(Tensor::new(p.shape().to_vec(), out)?);
    }
    state.step += 1;
    Ok(updated)
}
