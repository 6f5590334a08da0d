use super::ValueGrad;
use crate::error::{dim_err, Result};
use crate::graph::Graph;
use crate::nets::{perceptual_graph, GroupMask, ParameterSet};
use crate::tensor::Tensor;

fn check(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!(
            "loss inputs differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    if a.is_empty() {
        return Err(dim_err!("loss over an empty batch"));
    }
    Ok(())
}

/// Mean over samples of the per-element squared error averaged over each
/// sample's `C * H * W` values; gradient is with respect to `sr`.
pub fn content_loss(hr: &Tensor, sr: &Tensor) -> Result<ValueGrad> {
    check(hr, sr)?;
    let denom = sr.len() as f64;
    let mut grad = Tensor::zeros(sr.shape());
    let mut value = 0.0;
    for ((g, &s), &h) in grad.data_mut().iter_mut().zip(sr.data()).zip(hr.data()) {
        let d = s - h;
        value += d * d;
        *g = 2.0 * d / denom;
    }
    Ok(ValueGrad {
        value: value / denom,
        grad,
    })
}

/// Mean over samples of the per-sample L1 norm `sum |hr - sr|`.
pub fn l1_reconstruction(hr: &Tensor, sr: &Tensor) -> Result<ValueGrad> {
    check(hr, sr)?;
    let n = sr.shape().n as f64;
    let mut grad = Tensor::zeros(sr.shape());
    let mut value = 0.0;
    for ((g, &s), &h) in grad.data_mut().iter_mut().zip(sr.data()).zip(hr.data()) {
        let d = s - h;
        value += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok(ValueGrad {
        value: value / n,
        grad,
    })
}

/// Feature-space squared error normalized by `C_j * H_j * W_j` and averaged
/// over samples. The arithmetic is that of [`content_loss`].
pub fn feature_mse(f_hr: &Tensor, f_sr: &Tensor) -> Result<ValueGrad> {
    content_loss(f_hr, f_sr)
}

/// Perceptual loss at `layer` of the frozen extractor.
pub fn perceptual_loss(
    params: &ParameterSet,
    hr: &Tensor,
    sr: &Tensor,
    layer: usize,
) -> Result<f64> {
    check(hr, sr)?;
    let mut g = Graph::new(params, GroupMask::NONE);
    let a = g.input(hr.clone(), false);
    let b = g.input(sr.clone(), false);
    let fa = perceptual_graph(&mut g, a, layer)?;
    let fb = perceptual_graph(&mut g, b, layer)?;
    Ok(feature_mse(g.value(fa), g.value(fb))?.value)
}
