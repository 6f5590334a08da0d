use alloc::vec::Vec;

use super::config::NetConfig;
use super::params::{BnSlots, ConvSlots, LayoutBuilder, ParamSlot};
use crate::error::Result;
use crate::graph::{ConvSpec, Graph, NodeId, NormMode};
use crate::imaging::bicubic_upscale_plane;
use crate::math::logit;
use crate::tensor::{Shape, Tensor};

const PRELU_INIT: f64 = 0.25;
const GAIN: f64 = core::f64::consts::SQRT_2;
/// Heads start small so the first outputs sit near the interpolated input.
const HEAD_GAIN: f64 = 0.1;
/// Interpolated skip values are kept this far inside (0, 1) before `logit`.
const SKIP_EPS: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: ConvSlots,
    pub bn1: BnSlots,
    pub act: ParamSlot,
    pub conv2: ConvSlots,
    pub bn2: BnSlots,
}

#[derive(Clone, Debug)]
pub struct UpStage {
    pub conv: ConvSlots,
    pub act: ParamSlot,
    pub head: ConvSlots,
}

/// Slot layout of `W_SR`.
#[derive(Clone, Debug)]
pub struct GeneratorLayout {
    pub stem: ConvSlots,
    pub stem_act: ParamSlot,
    pub blocks: Vec<ResidualBlock>,
    pub trunk_conv: ConvSlots,
    pub trunk_bn: BnSlots,
    pub up: [UpStage; 2],
}

impl GeneratorLayout {
    pub(crate) fn build(cfg: &NetConfig, b: &mut LayoutBuilder) -> Self {
        let f = cfg.feature_width;
        let c = cfg.image_channels;
        let k3 = ConvSpec::same(1, 1);
        let stem = b.conv(c, f, 3, k3, GAIN, true);
        let stem_act = b.prelu(f, PRELU_INIT);
        let blocks = (0..cfg.n_residual_blocks)
            .map(|_| ResidualBlock {
                conv1: b.conv(f, f, 3, k3, GAIN, false),
                bn1: b.bn(f),
                act: b.prelu(f, PRELU_INIT),
                conv2: b.conv(f, f, 3, k3, GAIN, false),
                bn2: b.bn(f),
            })
            .collect();
        let trunk_conv = b.conv(f, f, 3, k3, 1.0, false);
        let trunk_bn = b.bn(f);
        let mut stage = || UpStage {
            conv: b.conv(f, 4 * f, 3, k3, GAIN, true),
            act: b.prelu(f, PRELU_INIT),
            head: b.conv(f, c, 3, k3, HEAD_GAIN, true),
        };
        let up = [stage(), stage()];
        GeneratorLayout {
            stem,
            stem_act,
            blocks,
            trunk_conv,
            trunk_bn,
            up,
        }
    }
}

/// conv-BN-PReLU-conv-BN plus identity skip.
pub fn residual_block(
    g: &mut Graph,
    x: NodeId,
    blk: &ResidualBlock,
    mode: NormMode,
    eps: f64,
) -> Result<NodeId> {
    let h = g.conv(x, &blk.conv1)?;
    let h = g.batch_norm(h, &blk.bn1, mode, eps)?;
    let h = g.prelu(h, blk.act)?;
    let h = g.conv(h, &blk.conv2)?;
    let h = g.batch_norm(h, &blk.bn2, mode, eps)?;
    g.add(x, h)
}

/// Node ids of the two image heads.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorNodes {
    pub mid: NodeId,
    pub full: NodeId,
}

/// Logit of the bicubic upscale of every plane of `lr`.
fn skip_logits(lr: &Tensor, factor: usize) -> Tensor {
    let s = lr.shape();
    let plane = s.h * s.w;
    let mut out = Vec::with_capacity(s.len() * factor * factor);
    for p in lr.data().chunks(plane) {
        out.extend(
            bicubic_upscale_plane(p, s.h, s.w, factor)
                .into_iter()
                .map(|v| logit(v.clamp(SKIP_EPS, 1.0 - SKIP_EPS))),
        );
    }
    Tensor::from_vec(Shape::new(s.n, s.c, s.h * factor, s.w * factor), out)
        .expect("shape matches data")
}

/// Records the generator on `g` for an LR batch node. Each image head
/// predicts a correction, in logit space, to the bicubic upscale of the
/// input at its resolution.
pub fn generator_graph(g: &mut Graph, lr: NodeId, mode: NormMode) -> Result<GeneratorNodes> {
    let params = g.params();
    let cfg = params.config();
    let l = &params.layouts().generator;
    let s = g.value(lr).shape();
    if (s.c, s.h, s.w) != (cfg.image_channels, cfg.base_resolution, cfg.base_resolution) {
        return Err(crate::error::dim_err!(
            "generator expects ({}, {b}, {b}) inputs, got {:?}",
            cfg.image_channels,
            s,
            b = cfg.base_resolution
        ));
    }
    let eps = cfg.bn_eps;
    let h = g.conv(lr, &l.stem)?;
    let stem = g.prelu(h, l.stem_act)?;
    let mut h = stem;
    for blk in &l.blocks {
        h = residual_block(g, h, blk, mode, eps)?;
    }
    let h = g.conv(h, &l.trunk_conv)?;
    let h = g.batch_norm(h, &l.trunk_bn, mode, eps)?;
    let mut h = g.add(stem, h)?;
    let mut heads = [lr; 2];
    for (i, st) in l.up.iter().enumerate() {
        let u = g.conv(h, &st.conv)?;
        let u = g.pixel_shuffle(u, 2)?;
        h = g.prelu(u, st.act)?;
        let img = g.conv(h, &st.head)?;
        let skip = skip_logits(g.value(lr), 2 << i);
        let skip = g.input(skip, false);
        let img = g.add(img, skip)?;
        heads[i] = g.sigmoid(img);
    }
    Ok(GeneratorNodes {
        mid: heads[0],
        full: heads[1],
    })
}
