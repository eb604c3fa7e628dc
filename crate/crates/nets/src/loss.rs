//! Loss values paired with their gradients, and the gradient reversal layer.
//!
//! Values come from [`rdalm_core::metrics`]; gradients use the fused
//! softmax/cross-entropy and sigmoid/BCE forms, which are exact whenever the
//! log floors are inactive.

use rdalm_core::metrics::{adv_loss, cls_loss, BatchLabels};

use crate::heads::{posteriors, softmax};
use crate::layers::sigmoid;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Cross-entropy of softmax(`logits`) against one-hot events; returns the
/// loss and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &BatchLabels) -> Result<(f64, Tensor)> {
    let p = softmax(logits);
    let loss = cls_loss(&posteriors(&p), labels)?;
    let n = labels.len() as f64;
    let mut grad = p;
    for (i, y) in labels.event_onehot.iter().enumerate() {
        for (g, t) in grad.sample_mut(i).iter_mut().zip(y) {
            *g = (*g - t) / n;
        }
    }
    Ok((loss, grad))
}

/// Binary cross-entropy of sigmoid(`logits`) against speech flags; returns
/// the loss and its gradient w.r.t. the logits.
pub fn sigmoid_bce(logits: &Tensor, speech: &[bool]) -> Result<(f64, Tensor)> {
    if logits.len() != speech.len() {
        return Err(Error::shape(format!("{} scores for {} flags", logits.len(), speech.len())));
    }
    let probs: Vec<f64> = logits.data().iter().map(|v| sigmoid(*v)).collect();
    let loss = adv_loss(&probs, speech)?;
    let n = speech.len() as f64;
    let grad: Vec<f64> = probs
        .iter()
        .zip(speech)
        .map(|(p, s)| (p - *s as u8 as f64) / n)
        .collect();
    Ok((loss, Tensor::new(logits.shape(), grad)?))
}

/// Gradient reversal: identity forward, `-lambda * upstream` backward.
pub fn grl_forward(x: &Tensor) -> Tensor {
    x.clone()
}

pub fn grl_backward(upstream: &Tensor, lambda: f64) -> Result<Tensor> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("gradient reversal needs a finite lambda >= 0, got {lambda}")));
    }
    let mut g = upstream.clone();
    g.data_mut().iter_mut().for_each(|v| *v *= -lambda);
    Ok(g)
}
