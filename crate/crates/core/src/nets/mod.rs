//! Generator, discriminators, detector and perceptual extractor.

mod config;
pub mod detector;
pub mod discriminator;
pub mod generator;
mod params;
pub mod perceptual;

pub use config::{NetConfig, PerceptualKind};
pub use detector::{detector_graph, DetectorLayout};
pub use discriminator::{discriminator_graph, DiscriminatorLayout, Which};
pub use generator::{generator_graph, GeneratorLayout, GeneratorNodes};
pub use params::{
    BnSlots, BufferSlot, ConvSlots, GroupId, GroupMask, LinearSlots, ParamGrads, ParamGroup,
    ParamSlot, ParameterSet, PERCEPTUAL_SEED,
};
pub use perceptual::{perceptual_graph, PerceptualLayout};

use alloc::vec::Vec;

use crate::boxes::{decode_predictions, nms, BoundingBox, GridEncoding};
use crate::error::Result;
use crate::graph::{Graph, NormMode};
use crate::imaging::ImageTensor;
use crate::tensor::Tensor;

/// Slot layouts for every network, derived from a [`NetConfig`].
#[derive(Clone, Debug)]
pub struct Layouts {
    pub generator: GeneratorLayout,
    pub dis1: DiscriminatorLayout,
    pub dis2: DiscriminatorLayout,
    pub detector: DetectorLayout,
    pub perceptual: PerceptualLayout,
}

/// Generator outputs at 2x and 4x the input size.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleOutput {
    pub mid: ImageTensor,
    pub full: ImageTensor,
}

/// Runs the generator on one LR image using stored normalization statistics.
pub fn generator_forward(params: &ParameterSet, lr: &ImageTensor) -> Result<MultiScaleOutput> {
    let mut g = Graph::new(params, GroupMask::NONE);
    let x = g.input(lr.tensor().clone(), false);
    let out = generator_graph(&mut g, x, NormMode::Frozen)?;
    Ok(MultiScaleOutput {
        mid: ImageTensor::from_tensor(g.value(out.mid).clone())?,
        full: ImageTensor::from_tensor(g.value(out.full).clone())?,
    })
}

/// Batch form of [`generator_forward`] returning the 4x output only.
pub fn generator_batch(params: &ParameterSet, lr: &Tensor, mode: NormMode) -> Result<Tensor> {
    let mut g = Graph::new(params, GroupMask::NONE);
    let x = g.input(lr.clone(), false);
    let out = generator_graph(&mut g, x, mode)?;
    Ok(g.value(out.full).clone())
}

/// Probability that `img` is a real image at the discriminator's scale.
pub fn discriminator_forward(
    params: &ParameterSet,
    img: &ImageTensor,
    which: Which,
) -> Result<f64> {
    let mut g = Graph::new(params, GroupMask::NONE);
    let x = g.input(img.tensor().clone(), false);
    let p = discriminator_graph(&mut g, x, which)?;
    Ok(g.value(p).data()[0])
}

/// Raw grid encodings for one HR-sized image, coarse to fine.
pub fn detector_forward(params: &ParameterSet, img: &ImageTensor) -> Result<[GridEncoding; 3]> {
    let mut g = Graph::new(params, GroupMask::NONE);
    let x = g.input(img.tensor().clone(), false);
    let outs = detector_graph(&mut g, x)?;
    let mut encs = Vec::with_capacity(3);
    for (s, id) in outs.iter().enumerate() {
        encs.push(encoding_from(params, s, g.value(*id), 0)?);
    }
    Ok(encs.try_into().expect("three scales"))
}

/// Decoded, thresholded and suppressed detections for one HR-sized image.
pub fn detect(
    params: &ParameterSet,
    img: &ImageTensor,
    conf_threshold: f64,
    nms_threshold: f64,
) -> Result<Vec<BoundingBox>> {
    let mut all = Vec::new();
    for enc in detector_forward(params, img)? {
        all.extend(decode_predictions(&enc, conf_threshold));
    }
    Ok(nms(&all, nms_threshold))
}

/// Wraps sample `n` of a raw detector output as a [`GridEncoding`].
pub fn encoding_from(
    params: &ParameterSet,
    scale_id: usize,
    raw: &Tensor,
    n: usize,
) -> Result<GridEncoding> {
    let cfg = params.config();
    GridEncoding::from_values(
        scale_id,
        cfg.detector_grids[scale_id],
        cfg.num_classes,
        cfg.anchors.for_scale(scale_id),
        raw.sample(n).to_vec(),
    )
}

/// Frozen features `(C_j, H_j, W_j)` of one image at `layer`.
pub fn perceptual_features(
    params: &ParameterSet,
    img: &ImageTensor,
    layer: usize,
) -> Result<Tensor> {
    let mut g = Graph::new(params, GroupMask::NONE);
    let x = g.input(img.tensor().clone(), false);
    let f = perceptual_graph(&mut g, x, layer)?;
    Ok(g.value(f).clone())
}

#[cfg(test)]
mod tests;
