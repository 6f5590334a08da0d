use alloc::vec::Vec;

use super::config::NetConfig;
use super::params::{ConvSlots, LayoutBuilder, LinearSlots};
use crate::error::{dim_err, Result};
use crate::graph::{ConvSpec, Graph, NodeId};

pub const DISCRIMINATOR_LAYERS: usize = 11;

/// Which discriminator: `D1` judges the 2x output, `D2` the 4x output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    D1,
    D2,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorLayout {
    pub input_size: usize,
    pub convs: Vec<ConvSlots>,
    pub dense: LinearSlots,
}

/// Eleven 4x4 convolutions. Odd layers have stride 2; even layers keep the
/// size with a 1/2 pixel asymmetric pad. Width doubles on the 2nd and 4th
/// stride-2 layer.
fn schedule(d: usize) -> [(usize, ConvSpec); DISCRIMINATOR_LAYERS] {
    let keep = ConvSpec::asymmetric(1, 1, 2);
    let down = ConvSpec::same(2, 1);
    let mut out = [(d, keep); DISCRIMINATOR_LAYERS];
    let mut width = d;
    let mut downs = 0;
    for (i, o) in out.iter_mut().enumerate() {
        if i % 2 == 1 {
            downs += 1;
            if downs == 2 || downs == 4 {
                width *= 2;
            }
            *o = (width, down);
        } else {
            *o = (width, keep);
        }
    }
    out
}

impl DiscriminatorLayout {
    pub(crate) fn build(cfg: &NetConfig, input_size: usize, b: &mut LayoutBuilder) -> Self {
        let gain = crate::math::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
        let mut cin = cfg.image_channels;
        let mut convs = Vec::with_capacity(DISCRIMINATOR_LAYERS);
        let mut size = input_size;
        for (cout, spec) in schedule(cfg.disc_width) {
            convs.push(b.conv(cin, cout, 4, spec, gain, true));
            cin = cout;
            if spec.stride == 2 {
                size /= 2;
            }
        }
        let dense = b.linear(cin * size * size, 1, 1.0);
        DiscriminatorLayout {
            input_size,
            convs,
            dense,
        }
    }
}

/// Records a discriminator; the result node holds one probability per sample,
/// shape `(N, 1, 1, 1)`.
pub fn discriminator_graph(g: &mut Graph, img: NodeId, which: Which) -> Result<NodeId> {
    let params = g.params();
    let cfg = params.config();
    let l = match which {
        Which::D1 => &params.layouts().dis1,
        Which::D2 => &params.layouts().dis2,
    };
    let s = g.value(img).shape();
    if (s.c, s.h, s.w) != (cfg.image_channels, l.input_size, l.input_size) {
        return Err(dim_err!(
            "{:?} expects ({}, {n}, {n}) inputs, got {:?}",
            which,
            cfg.image_channels,
            s,
            n = l.input_size
        ));
    }
    let mut h = img;
    for c in &l.convs {
        let y = g.conv(h, c)?;
        h = g.leaky_relu(y, cfg.leaky_slope);
    }
    let logit = g.linear(h, &l.dense)?;
    Ok(g.sigmoid(logit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_has_five_downsamples() {
        let s = schedule(8);
        assert_eq!(s.iter().filter(|(_, sp)| sp.stride == 2).count(), 5);
        let widths: Vec<usize> = s.iter().map(|x| x.0).collect();
        assert_eq!(widths, [8, 8, 8, 16, 16, 16, 16, 32, 32, 32, 32]);
        for (_, sp) in s {
            let k = 4;
            let (h, _) = sp.output_hw(64, 64, k).unwrap();
            assert_eq!(h, if sp.stride == 2 { 32 } else { 64 });
        }
    }
}
