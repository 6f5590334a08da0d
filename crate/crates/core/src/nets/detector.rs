use alloc::vec::Vec;

use super::config::NetConfig;
use super::params::{ConvSlots, LayoutBuilder};
use crate::boxes::{ANCHORS_PER_SCALE, FIELD_OBJ};
use crate::error::{dim_err, Result};
use crate::graph::{ConvSpec, Graph, NodeId};

/// Objectness logits start low so early training is not swamped by the
/// no-object term.
const OBJ_BIAS_INIT: f64 = -4.0;

#[derive(Clone, Debug)]
pub struct DarkResidual {
    pub reduce: ConvSlots,
    pub expand: ConvSlots,
}

#[derive(Clone, Debug)]
pub struct DownStage {
    pub down: ConvSlots,
    pub res: DarkResidual,
}

#[derive(Clone, Debug)]
pub struct Head {
    pub conv: ConvSlots,
    pub out: ConvSlots,
}

/// Slot layout of `W_d`.
#[derive(Clone, Debug)]
pub struct DetectorLayout {
    pub stem: ConvSlots,
    /// Strides 2, 4, 8, 16, 32.
    pub stages: Vec<DownStage>,
    /// Coarse to fine.
    pub heads: [Head; 3],
    /// 1x1 reductions before each upsample-and-concatenate.
    pub laterals: [ConvSlots; 2],
}

impl DetectorLayout {
    pub(crate) fn build(cfg: &NetConfig, b: &mut LayoutBuilder) -> Self {
        let w = cfg.det_width;
        let gain = crate::math::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
        let k3 = ConvSpec::same(1, 1);
        let k1 = ConvSpec::same(1, 0);
        let depth = ANCHORS_PER_SCALE * (5 + cfg.num_classes);
        let per = 5 + cfg.num_classes;
        let stem = b.conv(cfg.image_channels, w, 3, k3, gain, true);
        let widths = [2 * w, 4 * w, 8 * w, 16 * w, 16 * w];
        let mut cin = w;
        let mut stages = Vec::with_capacity(5);
        for &cout in &widths {
            let down = b.conv(cin, cout, 3, ConvSpec::same(2, 1), gain, true);
            let res = DarkResidual {
                reduce: b.conv(cout, cout / 2, 1, k1, gain, true),
                expand: b.conv(cout / 2, cout, 3, k3, gain, true),
            };
            stages.push(DownStage { down, res });
            cin = cout;
        }
        let head = |b: &mut LayoutBuilder, cin: usize, mid: usize| Head {
            conv: b.conv(cin, mid, 3, k3, gain, true),
            out: b.conv_bias_init(mid, depth, 1, k1, 1.0, |c| {
                if c % per == FIELD_OBJ {
                    OBJ_BIAS_INIT
                } else {
                    0.0
                }
            }),
        };
        let h0 = head(b, 16 * w, 16 * w);
        let lat0 = b.conv(16 * w, 8 * w, 1, k1, gain, true);
        let h1 = head(b, 8 * w + 16 * w, 8 * w);
        let lat1 = b.conv(8 * w, 4 * w, 1, k1, gain, true);
        let h2 = head(b, 4 * w + 8 * w, 4 * w);
        DetectorLayout {
            stem,
            stages,
            heads: [h0, h1, h2],
            laterals: [lat0, lat1],
        }
    }
}

/// Records the detector; returns raw output nodes for grids coarse to fine,
/// each `(N, 3 (5 + C), M, M)`.
pub fn detector_graph(g: &mut Graph, img: NodeId) -> Result<[NodeId; 3]> {
    let params = g.params();
    let cfg = params.config();
    let l = &params.layouts().detector;
    let s = g.value(img).shape();
    let hr = cfg.hr_resolution();
    if (s.c, s.h, s.w) != (cfg.image_channels, hr, hr) {
        return Err(dim_err!(
            "detector expects ({}, {hr}, {hr}) inputs, got {:?}",
            cfg.image_channels,
            s
        ));
    }
    let slope = cfg.leaky_slope;
    let cba = |g: &mut Graph, x: NodeId, c: &ConvSlots| -> Result<NodeId> {
        let y = g.conv(x, c)?;
        Ok(g.leaky_relu(y, slope))
    };
    let mut h = cba(g, img, &l.stem)?;
    let mut routes = Vec::with_capacity(5);
    for st in &l.stages {
        h = cba(g, h, &st.down)?;
        let r = cba(g, h, &st.res.reduce)?;
        let r = cba(g, r, &st.res.expand)?;
        h = g.add(h, r)?;
        routes.push(h);
    }
    // routes[2] is stride 8, routes[3] stride 16, routes[4] stride 32
    let mut outs = [img; 3];
    let mut x = routes[4];
    for i in 0..3 {
        if i > 0 {
            let lat = cba(g, x, &l.laterals[i - 1])?;
            let up = g.upsample(lat, 2);
            x = g.concat(up, routes[4 - i])?;
        }
        x = cba(g, x, &l.heads[i].conv)?;
        outs[i] = g.conv(x, &l.heads[i].out)?;
    }
    Ok(outs)
}
