//! Reconstruction, perceptual, adversarial and detection losses and their
//! weighted combination.
//!
//! Each loss returns its value together with the gradient with respect to
//! its differentiable input, so the trainer can attach it to a graph.

mod adversarial;
mod detection;
mod joint;
mod pixel;

pub use adversarial::{adversarial_grad, adversarial_loss, AdversarialForm, Side, PROB_EPS};
pub use detection::{detection_loss, DetTerms, DetectionLoss, SQRT_FLOOR};
pub use joint::{
    detector_objective, discriminator_objective, joint_loss, joint_objective, Batch, JointEval,
    JointOptions, LossBreakdown, TermWeights,
};
pub use pixel::{content_loss, feature_mse, l1_reconstruction, perceptual_loss};

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Weighting factors of the combined objective and of the detection loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
    pub lambda_l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 2e-6,
            beta: 1e-3,
            gamma: 1e-3,
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
            lambda_l1: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda_coord", self.lambda_coord),
            ("lambda_noobj", self.lambda_noobj),
            ("lambda_l1", self.lambda_l1),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(arg_err!("loss weight {name} = {v} must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to one input.
#[derive(Clone, Debug)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Tensor,
}
