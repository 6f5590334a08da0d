use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::config::NetConfig;
use super::{detector, discriminator, generator, perceptual, Layouts};
use crate::error::{arg_err, Result};
use crate::graph::ConvSpec;
use crate::rng::{stream, uniform, StreamRng};
use crate::tensor::{Shape, Tensor};

/// Seed of the frozen perceptual extractor; independent of the run seed.
pub const PERCEPTUAL_SEED: u64 = 0x5647_4731_3900_0001;

/// Named parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupId {
    Sr = 0,
    Dis1 = 1,
    Dis2 = 2,
    Det = 3,
    Vgg = 4,
}

impl GroupId {
    pub const ALL: [GroupId; 5] = [
        GroupId::Sr,
        GroupId::Dis1,
        GroupId::Dis2,
        GroupId::Det,
        GroupId::Vgg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupId::Sr => "W_SR",
            GroupId::Dis1 => "W_dis1",
            GroupId::Dis2 => "W_dis2",
            GroupId::Det => "W_d",
            GroupId::Vgg => "W_VGG",
        }
    }

    pub fn from_name(name: &str) -> Option<GroupId> {
        GroupId::ALL.into_iter().find(|g| g.name() == name)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Set of groups, used to request gradients or updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupMask(u8);

impl GroupMask {
    pub const NONE: GroupMask = GroupMask(0);

    pub fn of(groups: &[GroupId]) -> Self {
        GroupMask(groups.iter().fold(0, |m, g| m | (1 << g.index())))
    }

    pub fn contains(self, g: GroupId) -> bool {
        self.0 & (1 << g.index()) != 0
    }

    pub fn with(self, g: GroupId) -> Self {
        GroupMask(self.0 | (1 << g.index()))
    }

    pub fn iter(self) -> impl Iterator<Item = GroupId> {
        GroupId::ALL.into_iter().filter(move |g| self.contains(*g))
    }
}

/// A parameter tensor inside a group's flat value vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub group: GroupId,
    pub offset: usize,
    pub shape: Shape,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Non-trainable state (normalization running statistics).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferSlot {
    pub group: GroupId,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSlots {
    pub weight: ParamSlot,
    pub bias: Option<ParamSlot>,
    pub spec: ConvSpec,
}

#[derive(Clone, Copy, Debug)]
pub struct BnSlots {
    pub gamma: ParamSlot,
    pub beta: ParamSlot,
    pub running_mean: BufferSlot,
    pub running_var: BufferSlot,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearSlots {
    pub weight: ParamSlot,
    pub bias: ParamSlot,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Uniform(f64),
    Const(f64),
}

/// Assigns consecutive offsets to the tensors of one group.
pub(crate) struct LayoutBuilder {
    group: GroupId,
    len: usize,
    buffer_len: usize,
    inits: Vec<(ParamSlot, Init)>,
    buffer_inits: Vec<(BufferSlot, f64)>,
}

impl LayoutBuilder {
    pub fn new(group: GroupId) -> Self {
        LayoutBuilder {
            group,
            len: 0,
            buffer_len: 0,
            inits: Vec::new(),
            buffer_inits: Vec::new(),
        }
    }

    fn param(&mut self, shape: Shape, init: Init) -> ParamSlot {
        let slot = ParamSlot {
            group: self.group,
            offset: self.len,
            shape,
        };
        self.len += shape.len();
        self.inits.push((slot, init));
        slot
    }

    fn buffer(&mut self, len: usize, value: f64) -> BufferSlot {
        let slot = BufferSlot {
            group: self.group,
            offset: self.buffer_len,
            len,
        };
        self.buffer_len += len;
        self.buffer_inits.push((slot, value));
        slot
    }

    /// Convolution with fan-in scaled uniform init, `bound = gain * sqrt(3 / fan_in)`.
    pub fn conv(
        &mut self,
        cin: usize,
        cout: usize,
        k: usize,
        spec: ConvSpec,
        gain: f64,
        bias: bool,
    ) -> ConvSlots {
        let fan_in = (cin * k * k) as f64;
        let weight = self.param(
            Shape::new(cout, cin, k, k),
            Init::Uniform(gain * libm::sqrt(3.0 / fan_in)),
        );
        let bias = bias.then(|| self.param(Shape::new(1, cout, 1, 1), Init::Const(0.0)));
        ConvSlots { weight, bias, spec }
    }

    /// Convolution whose bias starts at a constant.
    pub fn conv_bias_init(
        &mut self,
        cin: usize,
        cout: usize,
        k: usize,
        spec: ConvSpec,
        gain: f64,
        bias_value: impl Fn(usize) -> f64,
    ) -> ConvSlots {
        let fan_in = (cin * k * k) as f64;
        let weight = self.param(
            Shape::new(cout, cin, k, k),
            Init::Uniform(gain * libm::sqrt(3.0 / fan_in)),
        );
        let offset = self.len;
        for c in 0..cout {
            self.param(Shape::new(1, 1, 1, 1), Init::Const(bias_value(c)));
        }
        let bias = Some(ParamSlot {
            group: self.group,
            offset,
            shape: Shape::new(1, cout, 1, 1),
        });
        ConvSlots { weight, bias, spec }
    }

    pub fn bn(&mut self, channels: usize) -> BnSlots {
        let gamma = self.param(Shape::new(1, channels, 1, 1), Init::Const(1.0));
        let beta = self.param(Shape::new(1, channels, 1, 1), Init::Const(0.0));
        let running_mean = self.buffer(channels, 0.0);
        let running_var = self.buffer(channels, 1.0);
        BnSlots {
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }

    pub fn prelu(&mut self, channels: usize, init: f64) -> ParamSlot {
        self.param(Shape::new(1, channels, 1, 1), Init::Const(init))
    }

    pub fn linear(&mut self, fin: usize, fout: usize, gain: f64) -> LinearSlots {
        let weight = self.param(
            Shape::new(fout, fin, 1, 1),
            Init::Uniform(gain * libm::sqrt(3.0 / fin as f64)),
        );
        let bias = self.param(Shape::new(1, fout, 1, 1), Init::Const(0.0));
        LinearSlots { weight, bias }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    fn initialize(&self, rng: &mut StreamRng) -> ParamGroup {
        let mut values = vec![0.0; self.len];
        for (slot, init) in &self.inits {
            let dst = &mut values[slot.range()];
            match *init {
                Init::Const(v) => dst.fill(v),
                Init::Uniform(b) => dst.iter_mut().for_each(|v| *v = uniform(rng, -b, b)),
            }
        }
        let mut buffers = vec![0.0; self.buffer_len];
        for (slot, v) in &self.buffer_inits {
            buffers[slot.offset..slot.offset + slot.len].fill(*v);
        }
        ParamGroup {
            values,
            buffers,
            trainable: true,
        }
    }
}

/// One group's flat parameter values, buffers and trainable flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub values: Vec<f64>,
    pub buffers: Vec<f64>,
    trainable: bool,
}

impl ParamGroup {
    pub fn new(values: Vec<f64>, buffers: Vec<f64>, trainable: bool) -> Self {
        ParamGroup {
            values,
            buffers,
            trainable,
        }
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// All network weights: `W_SR`, `W_dis1`, `W_dis2`, `W_d`, and the frozen
/// `W_VGG`.
#[derive(Clone, Debug)]
pub struct ParameterSet {
    config: NetConfig,
    layouts: Layouts,
    groups: [ParamGroup; 5],
}

impl PartialEq for ParameterSet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.groups == other.groups
    }
}

/// Slot layouts for every group, plus the builders that know their inits.
pub(crate) fn build_layouts(config: &NetConfig) -> (Layouts, [LayoutBuilder; 5]) {
    let mut b = GroupId::ALL.map(LayoutBuilder::new);
    let [sr, d1, d2, det, vgg] = &mut b;
    let layouts = Layouts {
        generator: generator::GeneratorLayout::build(config, sr),
        dis1: discriminator::DiscriminatorLayout::build(config, 2 * config.base_resolution, d1),
        dis2: discriminator::DiscriminatorLayout::build(config, 4 * config.base_resolution, d2),
        detector: detector::DetectorLayout::build(config, det),
        perceptual: perceptual::PerceptualLayout::build(config, vgg),
    };
    (layouts, b)
}

impl ParameterSet {
    /// Fresh parameters for every group. `W_VGG` uses a fixed seed.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layouts, builders) = build_layouts(&config);
        let groups = GroupId::ALL.map(|g| {
            let layout = &builders[g.index()];
            let mut rng = if g == GroupId::Vgg {
                stream(PERCEPTUAL_SEED, 0)
            } else {
                stream(seed, 0x5700 + g as u64)
            };
            let mut pg = layout.initialize(&mut rng);
            if g == GroupId::Vgg {
                pg.trainable = false;
            }
            pg
        });
        Ok(ParameterSet {
            config,
            layouts,
            groups,
        })
    }

    /// Reassembles a set from stored groups, checking every length.
    pub fn from_groups(config: NetConfig, groups: [ParamGroup; 5]) -> Result<Self> {
        config.validate()?;
        let (layouts, builders) = build_layouts(&config);
        for g in GroupId::ALL {
            let layout = &builders[g.index()];
            let pg = &groups[g.index()];
            if pg.values.len() != layout.len() || pg.buffers.len() != layout.buffer_len() {
                return Err(arg_err!(
                    "group {} has {}+{} values, config needs {}+{}",
                    g.name(),
                    pg.values.len(),
                    pg.buffers.len(),
                    layout.len(),
                    layout.buffer_len()
                ));
            }
            if pg.values.iter().chain(&pg.buffers).any(|v| !v.is_finite()) {
                return Err(arg_err!("group {} contains non-finite values", g.name()));
            }
        }
        if groups[GroupId::Vgg.index()].trainable {
            return Err(arg_err!("W_VGG must be frozen"));
        }
        Ok(ParameterSet {
            config,
            layouts,
            groups,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layouts(&self) -> &Layouts {
        &self.layouts
    }

    pub fn group(&self, g: GroupId) -> &ParamGroup {
        &self.groups[g.index()]
    }

    pub fn group_mut(&mut self, g: GroupId) -> &mut ParamGroup {
        &mut self.groups[g.index()]
    }

    pub fn groups(&self) -> &[ParamGroup; 5] {
        &self.groups
    }

    pub fn is_trainable(&self, g: GroupId) -> bool {
        self.groups[g.index()].trainable
    }

    pub fn set_trainable(&mut self, g: GroupId, trainable: bool) -> Result<()> {
        if g == GroupId::Vgg && trainable {
            return Err(arg_err!("W_VGG is always frozen"));
        }
        self.groups[g.index()].trainable = trainable;
        Ok(())
    }

    pub fn tensor(&self, slot: &ParamSlot) -> Tensor {
        let v = self.groups[slot.group.index()].values[slot.range()].to_vec();
        Tensor::from_vec(slot.shape, v).expect("slot shape matches its range")
    }

    pub fn buffer(&self, slot: &BufferSlot) -> &[f64] {
        &self.groups[slot.group.index()].buffers[slot.offset..slot.offset + slot.len]
    }

    pub fn buffer_mut(&mut self, slot: &BufferSlot) -> &mut [f64] {
        &mut self.groups[slot.group.index()].buffers[slot.offset..slot.offset + slot.len]
    }

    /// Replaces `W_VGG` with externally supplied weights.
    pub fn load_perceptual_weights(&mut self, values: Vec<f64>) -> Result<()> {
        let layout = &build_layouts(&self.config).1[GroupId::Vgg.index()];
        if values.len() != layout.len() {
            return Err(arg_err!(
                "perceptual extractor needs {} weights, got {}",
                layout.len(),
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(arg_err!("perceptual weights must be finite"));
        }
        self.groups[GroupId::Vgg.index()].values = values;
        Ok(())
    }

    /// Copies one group from another set built with the same config.
    pub fn copy_group_from(&mut self, other: &ParameterSet, g: GroupId) -> Result<()> {
        if other.config != self.config {
            return Err(arg_err!("network configs differ"));
        }
        self.groups[g.index()] = other.groups[g.index()].clone();
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.values.iter().chain(&g.buffers).all(|v| v.is_finite()))
    }

    /// Count of trainable scalars per group, for reporting.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for g in GroupId::ALL {
            let pg = self.group(g);
            s.push_str(&alloc::format!(
                "{}: {} values{}\n",
                g.name(),
                pg.values.len(),
                if pg.trainable { "" } else { " (frozen)" }
            ));
        }
        s
    }
}

/// Per-group gradient vectors; `None` for groups that were not requested.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    pub groups: [Option<Vec<f64>>; 5],
}

impl ParamGrads {
    pub fn get(&self, g: GroupId) -> Option<&[f64]> {
        self.groups[g.index()].as_deref()
    }

    pub fn get_mut(&mut self, g: GroupId) -> Option<&mut Vec<f64>> {
        self.groups[g.index()].as_mut()
    }

    pub fn ensure(&mut self, g: GroupId, len: usize) -> &mut Vec<f64> {
        self.groups[g.index()].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.groups.iter_mut().flatten() {
            v.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self += k * other` for groups present in either.
    pub fn add_scaled(&mut self, other: &ParamGrads, k: f64) {
        for (i, o) in other.groups.iter().enumerate() {
            if let Some(o) = o {
                let dst = self.groups[i].get_or_insert_with(|| vec![0.0; o.len()]);
                for (d, s) in dst.iter_mut().zip(o) {
                    *d += k * s;
                }
            }
        }
    }

    /// Euclidean norm over the listed groups.
    pub fn norm(&self, mask: GroupMask) -> f64 {
        let mut s = 0.0;
        for g in mask.iter() {
            if let Some(v) = self.get(g) {
                s += v.iter().map(|x| x * x).sum::<f64>();
            }
        }
        libm::sqrt(s)
    }
}
