use alloc::vec::Vec;

use crate::boxes::AnchorSet;
use crate::error::{arg_err, Result};

/// Frozen feature extractor used by the perceptual loss.
#[derive(Clone, Debug, PartialEq)]
pub enum PerceptualKind {
    /// Features are the image itself; only layer 0 exists.
    Identity,
    /// Stride-2 3x3 convolution stages with ReLU, one per width.
    Stack { widths: Vec<usize> },
}

impl PerceptualKind {
    pub fn default_stack() -> Self {
        PerceptualKind::Stack {
            widths: alloc::vec![32, 64, 128, 128],
        }
    }

    /// Deepest valid layer index; layer 0 is the input image.
    pub fn depth(&self) -> usize {
        match self {
            PerceptualKind::Identity => 0,
            PerceptualKind::Stack { widths } => widths.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub image_channels: usize,
    /// LR side length in pixels. SR output is 4x this.
    pub base_resolution: usize,
    pub n_residual_blocks: usize,
    pub feature_width: usize,
    pub disc_width: usize,
    pub det_width: usize,
    pub leaky_slope: f64,
    /// Coarse to fine; must be `[B/8, B/4, B/2]` for `B = base_resolution`.
    pub detector_grids: [usize; 3],
    pub num_classes: usize,
    pub perceptual: PerceptualKind,
    pub perceptual_layer: usize,
    pub anchors: AnchorSet,
    pub bn_eps: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::desk()
    }
}

impl NetConfig {
    /// LR 32 to SR 128, grids 4/8/16.
    pub fn desk() -> Self {
        NetConfig {
            image_channels: 3,
            base_resolution: 32,
            n_residual_blocks: 16,
            feature_width: 64,
            disc_width: 64,
            det_width: 16,
            leaky_slope: 0.2,
            detector_grids: [4, 8, 16],
            num_classes: 1,
            perceptual: PerceptualKind::default_stack(),
            perceptual_layer: 4,
            anchors: AnchorSet::default(),
            bn_eps: 1e-5,
        }
    }

    /// Desk geometry with narrower layers and a shorter trunk: 4 blocks of
    /// width 32, discriminator width 16, detector width 8.
    pub fn compact() -> Self {
        NetConfig {
            n_residual_blocks: 4,
            feature_width: 32,
            disc_width: 16,
            det_width: 8,
            perceptual: PerceptualKind::Stack {
                widths: alloc::vec![16, 32, 64, 64],
            },
            ..NetConfig::desk()
        }
    }

    /// LR 128 to SR 512, grids 16/32/64.
    pub fn paper() -> Self {
        NetConfig {
            base_resolution: 128,
            detector_grids: [16, 32, 64],
            det_width: 32,
            ..NetConfig::desk()
        }
    }

    /// Same as `self` at another LR size, with grids following.
    pub fn with_base_resolution(mut self, b: usize) -> Self {
        self.base_resolution = b;
        self.detector_grids = [b / 8, b / 4, b / 2];
        self
    }

    pub fn mid_resolution(&self) -> usize {
        2 * self.base_resolution
    }

    pub fn hr_resolution(&self) -> usize {
        4 * self.base_resolution
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.base_resolution;
        if b == 0 || b % 16 != 0 {
            return Err(arg_err!(
                "base_resolution {b} must be a positive multiple of 16"
            ));
        }
        if self.detector_grids != [b / 8, b / 4, b / 2] {
            return Err(arg_err!(
                "detector_grids {:?} must be [{}, {}, {}] for base_resolution {b}",
                self.detector_grids,
                b / 8,
                b / 4,
                b / 2
            ));
        }
        if self.n_residual_blocks == 0 {
            return Err(arg_err!("n_residual_blocks must be at least 1"));
        }
        if !matches!(self.image_channels, 1 | 3) {
            return Err(arg_err!("image_channels must be 1 or 3"));
        }
        if self.feature_width == 0
            || self.disc_width == 0
            || self.det_width < 2
            || self.det_width % 2 != 0
        {
            return Err(arg_err!("layer widths must be positive (det_width even)"));
        }
        if self.num_classes == 0 {
            return Err(arg_err!("num_classes must be at least 1"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0 && self.bn_eps > 0.0) {
            return Err(arg_err!("leaky_slope must be >= 0 and bn_eps > 0"));
        }
        if self.perceptual_layer > self.perceptual.depth() {
            return Err(arg_err!(
                "perceptual_layer {} exceeds extractor depth {}",
                self.perceptual_layer,
                self.perceptual.depth()
            ));
        }
        if let PerceptualKind::Stack { widths } = &self.perceptual {
            if widths.iter().any(|&w| w == 0) {
                return Err(arg_err!("perceptual widths must be positive"));
            }
            if self.hr_resolution() >> widths.len() == 0 {
                return Err(arg_err!("perceptual stack too deep for the image size"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        NetConfig::desk().validate().unwrap();
        let p = NetConfig::paper();
        p.validate().unwrap();
        assert_eq!(p.detector_grids, [16, 32, 64]);
        assert_eq!(p.hr_resolution(), 512);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut c = NetConfig::desk();
        c.detector_grids = [4, 8, 8];
        assert!(c.validate().is_err());
        assert!(NetConfig::desk()
            .with_base_resolution(24)
            .validate()
            .is_err());
        let c = NetConfig {
            n_residual_blocks: 0,
            ..NetConfig::desk()
        };
        assert!(c.validate().is_err());
    }
}
