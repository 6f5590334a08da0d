//! Image containers, bicubic degradation, patching, augmentation, label text
//! and the synthetic scene generator.

mod augment;
mod bicubic;
mod labels;
mod patches;
mod synth;

use alloc::string::String;
use alloc::vec::Vec;

pub use augment::{augment, sharpen, Augment};
pub use bicubic::{bicubic_downscale, bicubic_upscale, bicubic_upscale_plane, cubic_kernel};
pub use labels::{format_detections, format_labels, parse_detections, parse_labels};
pub use patches::extract_patches;
pub use synth::{synthesize_scene, synthesize_scene_with, SynthParams};

use crate::boxes::BoundingBox;
use crate::error::{arg_err, dim_err, Result};
use crate::tensor::{Shape, Tensor};

/// A `(channels, height, width)` image with every value finite and in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    t: Tensor,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(
            Shape::new(1, channels, height, width),
            data,
        )?)
    }

    /// Checks range and shape of a batch-of-one tensor.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 || !matches!(s.c, 1 | 3) || s.h == 0 || s.w == 0 {
            return Err(dim_err!(
                "image tensor must be (1, 1|3, H>0, W>0), got {:?}",
                s
            ));
        }
        if let Some(v) = t
            .data()
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(arg_err!("image value {v} outside [0, 1]"));
        }
        Ok(ImageTensor { t })
    }

    /// Like [`ImageTensor::from_tensor`] but clamps into range; NaN becomes 0.
    pub fn from_tensor_clamped(t: Tensor) -> Result<Self> {
        let t = t.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::from_tensor(t)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_tensor(Tensor::filled(
            Shape::new(1, channels, height, width),
            value,
        ))
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Self::from_tensor(Tensor::from_fn(
            Shape::new(1, channels, height, width),
            |_, c, y, x| f(c, y, x),
        ))
    }

    pub fn channels(&self) -> usize {
        self.t.shape().c
    }

    pub fn height(&self) -> usize {
        self.t.shape().h
    }

    pub fn width(&self) -> usize {
        self.t.shape().w
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.t.at(0, c, y, x)
    }

    pub fn data(&self) -> &[f64] {
        self.t.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.t
    }

    pub fn into_tensor(self) -> Tensor {
        self.t
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, c: usize) -> &[f64] {
        let p = self.height() * self.width();
        &self.t.data()[c * p..(c + 1) * p]
    }

    pub fn mean(&self) -> f64 {
        self.t.sum() / self.t.len() as f64
    }
}

/// An image with its ground-truth boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScene {
    pub image: ImageTensor,
    pub boxes: Vec<BoundingBox>,
    pub source_id: String,
}

impl LabeledScene {
    pub fn new(
        image: ImageTensor,
        boxes: Vec<BoundingBox>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        for b in &boxes {
            b.validate()?;
        }
        Ok(LabeledScene {
            image,
            boxes,
            source_id: source_id.into(),
        })
    }
}

/// An HR image, its 4x-downscaled LR counterpart, and HR-normalized labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub hr: ImageTensor,
    pub lr: ImageTensor,
    pub labels: Vec<BoundingBox>,
}

impl PairedSample {
    pub fn new(hr: ImageTensor, lr: ImageTensor, labels: Vec<BoundingBox>) -> Result<Self> {
        if hr.height() != 4 * lr.height()
            || hr.width() != 4 * lr.width()
            || hr.channels() != lr.channels()
        {
            return Err(dim_err!(
                "HR {}x{} must be exactly 4x LR {}x{}",
                hr.height(),
                hr.width(),
                lr.height(),
                lr.width()
            ));
        }
        Ok(PairedSample { hr, lr, labels })
    }

    /// Pairs a scene with its bicubic 4x downscale.
    pub fn from_scene(scene: &LabeledScene) -> Result<Self> {
        let lr = bicubic_downscale(&scene.image, 4)?;
        PairedSample::new(scene.image.clone(), lr, scene.boxes.clone())
    }
}
