use alloc::vec::Vec;

use crate::math::ln;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

/// Generator-side objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdversarialForm {
    /// `-mean log D(G(x))`.
    #[default]
    NonSaturating,
    /// `mean log(1 - D(G(x)))`.
    Minimax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

/// Discriminator side: `-mean log d_real - mean log(1 - d_fake)`.
/// Generator side ignores `d_real`.
pub fn adversarial_loss(d_real: &[f64], d_fake: &[f64], side: Side, form: AdversarialForm) -> f64 {
    match side {
        Side::Discriminator => {
            -mean(d_real.iter().map(|&p| ln(clamp(p))), d_real.len())
                - mean(d_fake.iter().map(|&p| ln(1.0 - clamp(p))), d_fake.len())
        }
        Side::Generator => match form {
            AdversarialForm::NonSaturating => {
                -mean(d_fake.iter().map(|&p| ln(clamp(p))), d_fake.len())
            }
            AdversarialForm::Minimax => {
                mean(d_fake.iter().map(|&p| ln(1.0 - clamp(p))), d_fake.len())
            }
        },
    }
}

/// Gradients of [`adversarial_loss`] with respect to `d_real` and `d_fake`.
/// Zero where the clamp is active.
pub fn adversarial_grad(
    d_real: &[f64],
    d_fake: &[f64],
    side: Side,
    form: AdversarialForm,
) -> (Vec<f64>, Vec<f64>) {
    let active = |p: f64| p > PROB_EPS && p < 1.0 - PROB_EPS;
    let nr = d_real.len().max(1) as f64;
    let nf = d_fake.len().max(1) as f64;
    match side {
        Side::Discriminator => (
            d_real
                .iter()
                .map(|&p| if active(p) { -1.0 / (nr * p) } else { 0.0 })
                .collect(),
            d_fake
                .iter()
                .map(|&p| {
                    if active(p) {
                        1.0 / (nf * (1.0 - p))
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        Side::Generator => (
            alloc::vec![0.0; d_real.len()],
            d_fake
                .iter()
                .map(|&p| {
                    if !active(p) {
                        0.0
                    } else if form == AdversarialForm::NonSaturating {
                        -1.0 / (nf * p)
                    } else {
                        -1.0 / (nf * (1.0 - p))
                    }
                })
                .collect(),
        ),
    }
}
