use alloc::vec::Vec;

use super::config::{NetConfig, PerceptualKind};
use super::params::{ConvSlots, LayoutBuilder};
use crate::error::{arg_err, Result};
use crate::graph::{ConvSpec, Graph, NodeId};

/// Slot layout of `W_VGG`.
#[derive(Clone, Debug)]
pub struct PerceptualLayout {
    pub stages: Vec<ConvSlots>,
}

impl PerceptualLayout {
    pub(crate) fn build(cfg: &NetConfig, b: &mut LayoutBuilder) -> Self {
        let mut stages = Vec::new();
        if let PerceptualKind::Stack { widths } = &cfg.perceptual {
            let mut cin = cfg.image_channels;
            for &w in widths {
                stages.push(b.conv(
                    cin,
                    w,
                    3,
                    ConvSpec::same(2, 1),
                    core::f64::consts::SQRT_2,
                    true,
                ));
                cin = w;
            }
        }
        PerceptualLayout { stages }
    }

    /// Feature shape `(C_j, H_j, W_j)` at `layer` for a square input of side `size`.
    pub fn feature_shape(
        &self,
        cfg: &NetConfig,
        size: usize,
        layer: usize,
    ) -> Result<(usize, usize, usize)> {
        if layer > self.stages.len() {
            return Err(arg_err!(
                "perceptual layer {layer} out of range 0..={}",
                self.stages.len()
            ));
        }
        if layer == 0 {
            return Ok((cfg.image_channels, size, size));
        }
        let mut s = size;
        for st in &self.stages[..layer] {
            s = st.spec.output_hw(s, s, 3)?.0;
        }
        Ok((self.stages[layer - 1].weight.shape.n, s, s))
    }
}

/// Records the frozen extractor up to `layer`; layer 0 is the image itself.
pub fn perceptual_graph(g: &mut Graph, img: NodeId, layer: usize) -> Result<NodeId> {
    let l = &g.params().layouts().perceptual;
    if layer > l.stages.len() {
        return Err(arg_err!(
            "perceptual layer {layer} out of range 0..={}",
            l.stages.len()
        ));
    }
    let mut h = img;
    for st in &l.stages[..layer] {
        let y = g.conv(h, st)?;
        h = g.relu(y);
    }
    Ok(h)
}
