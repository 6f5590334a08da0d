//! The three training phases, schedules, and the gradient-check harness.
//!
//! Training is step-driven: a [`TrainState`] carries everything needed to
//! continue a run (parameters, optimizer moments, the shuffle stream and
//! its position), so `k` steps followed by `m` more give the same result as
//! `k + m` steps in one go.

mod adam;
mod gradcheck;

pub use adam::{clip_grad_norm, Adam, Moments};
pub use gradcheck::{gradient_check, CheckLine, GradCheckReport};

use alloc::vec::Vec;

use crate::boxes::encode_targets;
use crate::error::{arg_err, Error, Result};
use crate::graph::{BnRecord, NormMode};
use crate::imaging::{LabeledScene, PairedSample};
use crate::losses::{
    detector_objective, discriminator_objective, joint_objective, Batch, DetTerms, JointOptions,
    LossBreakdown, LossWeights, TermWeights,
};
use crate::math::{floor, powf};
use crate::nets::{GroupId, GroupMask, NetConfig, ParamGrads, ParameterSet};
use crate::rng::{self, RngState};
use crate::tensor::Tensor;

const SHUFFLE_DOMAIN: u64 = 0x5348_5546;

/// Which procedure a state belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    PretrainSr,
    PretrainDet,
    Joint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PretrainSr => "sr",
            Phase::PretrainDet => "det",
            Phase::Joint => "joint",
        }
    }

    pub fn from_name(s: &str) -> Option<Phase> {
        [Phase::PretrainSr, Phase::PretrainDet, Phase::Joint]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

/// How the joint phase applies its decay constant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecayMode {
    /// Learning rate multiplied by `ema_decay` after every step.
    #[default]
    LearningRate,
    /// Polyak averaging of the updated parameters with rate `ema_decay`.
    ParameterEma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub ema_decay: f64,
    pub decay_mode: DecayMode,
    pub batch_size: usize,
    pub epochs: u64,
    /// When set, overrides `epochs` as the number of steps to run.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub weights: LossWeights,
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub bn_momentum: f64,
    /// Keep updating the discriminators during the joint phase.
    pub joint_discriminators: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase: Phase::PretrainSr,
            lr: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_every: 5,
            ema_decay: 0.9991,
            decay_mode: DecayMode::LearningRate,
            batch_size: 1,
            epochs: 10,
            max_steps: None,
            seed: 0,
            weights: LossWeights::default(),
            conf_threshold: 0.5,
            nms_threshold: 0.45,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 10.0,
            bn_momentum: 0.1,
            joint_discriminators: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(arg_err!("lr must be > 0, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(arg_err!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            ));
        }
        if self.lr_decay_every == 0 {
            return Err(arg_err!("lr_decay_every must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(arg_err!("batch_size must be >= 1"));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay <= 1.0) {
            return Err(arg_err!(
                "ema_decay must lie in (0, 1], got {}",
                self.ema_decay
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(arg_err!("clip_norm must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(arg_err!("bn_momentum must lie in [0, 1]"));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(arg_err!("{name} must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(self.adam_beta1, self.adam_beta2, self.adam_eps)
    }

    /// Steps the phase runs for a dataset of `n` items.
    pub fn total_steps(&self, n: usize) -> u64 {
        self.max_steps
            .unwrap_or(self.epochs * n.div_ceil(self.batch_size) as u64)
    }
}

/// Step-decayed learning rate for `epoch`.
pub fn lr_schedule(config: &TrainConfig, epoch: u64) -> f64 {
    config.lr
        * powf(
            config.lr_decay_factor,
            floor((epoch / config.lr_decay_every) as f64),
        )
}

/// Everything that determines how a run continues.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub phase: Phase,
    pub step: u64,
    /// Steps taken within the current phase's decay horizon (joint phase).
    pub phase_step: u64,
    pub epoch: u64,
    /// Shuffled order of the current epoch and the position in it.
    pub order: Vec<usize>,
    pub cursor: usize,
    pub params: ParameterSet,
    pub adam: Adam,
    pub rng: RngState,
    pub history: Vec<LossBreakdown>,
    /// Averaged parameters per group, present in EMA mode.
    pub ema: [Option<Vec<f64>>; 5],
}

impl TrainState {
    pub fn new(params: ParameterSet, config: &TrainConfig) -> Self {
        TrainState {
            phase: config.phase,
            step: 0,
            phase_step: 0,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            params,
            adam: config.adam(),
            rng: RngState::capture(&rng::stream(config.seed, SHUFFLE_DOMAIN)),
            history: Vec::new(),
            ema: Default::default(),
        }
    }

    /// Indices of the next minibatch, reshuffling at epoch boundaries.
    fn next_batch(&mut self, n: usize, batch_size: usize) -> Vec<usize> {
        if self.order.len() != n || self.cursor >= n {
            if self.order.len() == n {
                self.epoch += 1;
            }
            let mut r = self.rng.restore();
            self.order = rng::permutation(&mut r, n);
            self.rng = RngState::capture(&r);
            self.cursor = 0;
        }
        let end = (self.cursor + batch_size).min(n);
        let idx = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        idx
    }

    /// Parameters with averaged values substituted where available.
    pub fn averaged_params(&self) -> ParameterSet {
        let mut p = self.params.clone();
        for g in GroupId::ALL {
            if let Some(v) = &self.ema[g.index()] {
                p.group_mut(g).values.clone_from(v);
            }
        }
        p
    }
}

fn non_finite(step: u64, term: &str) -> Error {
    Error::NonFinite {
        step,
        term: term.into(),
    }
}

fn check_breakdown(step: u64, b: &LossBreakdown) -> Result<()> {
    for (name, v) in [
        ("content", b.content),
        ("perceptual", b.perceptual),
        ("adversarial", b.adversarial_g),
        ("detection", b.detection),
        ("total", b.total),
    ] {
        if !v.is_finite() {
            return Err(non_finite(step, name));
        }
    }
    Ok(())
}

fn update_running_stats(params: &mut ParameterSet, records: &[BnRecord], momentum: f64) {
    for r in records {
        let mean = params.buffer_mut(&r.slots.running_mean);
        for (m, b) in mean.iter_mut().zip(&r.mean) {
            *m = (1.0 - momentum) * *m + momentum * b;
        }
        let var = params.buffer_mut(&r.slots.running_var);
        for (v, b) in var.iter_mut().zip(&r.var) {
            *v = (1.0 - momentum) * *v + momentum * b;
        }
    }
}

/// Clip, check and apply one update for the groups in `mask`.
fn apply(
    state: &mut TrainState,
    mut grads: ParamGrads,
    mask: GroupMask,
    lr: f64,
    clip: f64,
) -> Result<()> {
    let norm = clip_grad_norm(&mut grads, mask, clip);
    if !norm.is_finite() {
        return Err(non_finite(state.step, "gradient"));
    }
    state.adam.step(&mut state.params, &grads, mask, lr)
}

fn discriminators_step(
    state: &mut TrainState,
    config: &TrainConfig,
    batch: &Batch,
    sr_full: &Tensor,
    sr_mid: &Tensor,
    lr: f64,
) -> Result<()> {
    let (d_loss, d_grads) = discriminator_objective(&state.params, batch, sr_full, sr_mid)?;
    if !d_loss.is_finite() {
        return Err(non_finite(state.step, "discriminator"));
    }
    log::trace!("step {} discriminator loss {d_loss:.6}", state.step);
    apply(
        state,
        d_grads,
        GroupMask::of(&[GroupId::Dis1, GroupId::Dis2]),
        lr,
        config.clip_norm,
    )
}

fn sr_step(state: &mut TrainState, data: &[PairedSample], config: &TrainConfig) -> Result<()> {
    let idx = state.next_batch(data.len(), config.batch_size);
    let samples: Vec<&PairedSample> = idx.iter().map(|&i| &data[i]).collect();
    let batch = Batch::new(&samples, state.params.config())?;
    let lr = lr_schedule(config, state.epoch);
    let g_mask = GroupMask::of(&[GroupId::Sr]);
    let opts = JointOptions::new(
        TermWeights::sr_only(&config.weights),
        g_mask,
        NormMode::Batch,
    );
    let eval = joint_objective(&state.params, &batch, &config.weights, &opts)?;
    check_breakdown(state.step, &eval.breakdown)?;
    // both gradients come from the same parameter point; D moves first
    if config.weights.beta > 0.0 {
        discriminators_step(state, config, &batch, &eval.sr_full, &eval.sr_mid, lr)?;
    }
    apply(state, eval.grads, g_mask, lr, config.clip_norm)?;
    update_running_stats(&mut state.params, &eval.bn_records, config.bn_momentum);
    state.history.push(eval.breakdown);
    Ok(())
}

fn det_step(state: &mut TrainState, data: &[LabeledScene], config: &TrainConfig) -> Result<()> {
    let idx = state.next_batch(data.len(), config.batch_size);
    let cfg = state.params.config();
    let hr: Vec<&Tensor> = idx.iter().map(|&i| data[i].image.tensor()).collect();
    let hr = Tensor::stack(&hr)?;
    let targets = idx
        .iter()
        .map(|&i| encode_targets(&data[i].boxes, &cfg.anchors, cfg.detector_grids))
        .collect::<Result<Vec<_>>>()?;
    let mask = GroupMask::of(&[GroupId::Det]);
    let (d, grads) = detector_objective(
        &state.params,
        &hr,
        &targets,
        &config.weights,
        DetTerms::ALL,
        mask,
    )?;
    let b = LossBreakdown {
        content: 0.0,
        perceptual: 0.0,
        adversarial_g: 0.0,
        detection: d.total,
        total: d.total,
        weights: TermWeights::only_detection(),
    };
    check_breakdown(state.step, &b)?;
    apply(
        state,
        grads,
        mask,
        lr_schedule(config, state.epoch),
        config.clip_norm,
    )?;
    state.history.push(b);
    Ok(())
}

fn joint_step(state: &mut TrainState, data: &[PairedSample], config: &TrainConfig) -> Result<()> {
    let idx = state.next_batch(data.len(), config.batch_size);
    let samples: Vec<&PairedSample> = idx.iter().map(|&i| &data[i]).collect();
    let batch = Batch::new(&samples, state.params.config())?;
    let w = &config.weights;
    let mut lr = lr_schedule(config, state.epoch);
    if config.decay_mode == DecayMode::LearningRate {
        lr *= powf(config.ema_decay, state.phase_step as f64);
    }
    let mask = if w.gamma > 0.0 {
        GroupMask::of(&[GroupId::Sr, GroupId::Det])
    } else {
        GroupMask::of(&[GroupId::Sr])
    };
    let opts = JointOptions::new(TermWeights::joint(w), mask, NormMode::Frozen);
    let eval = joint_objective(&state.params, &batch, w, &opts)?;
    check_breakdown(state.step, &eval.breakdown)?;
    if config.joint_discriminators && w.beta > 0.0 {
        discriminators_step(state, config, &batch, &eval.sr_full, &eval.sr_mid, lr)?;
    }
    // the two update sets are disjoint, so one clipped step per group set
    // is equivalent to separate detector and generator steps
    let mut det = ParamGrads::default();
    if let Some(v) = eval.grads.groups[GroupId::Det.index()].clone() {
        det.groups[GroupId::Det.index()] = Some(v);
    }
    let mut sr = eval.grads;
    sr.groups[GroupId::Det.index()] = None;
    if mask.contains(GroupId::Det) {
        apply(
            state,
            det,
            GroupMask::of(&[GroupId::Det]),
            lr,
            config.clip_norm,
        )?;
    }
    apply(
        state,
        sr,
        GroupMask::of(&[GroupId::Sr]),
        lr,
        config.clip_norm,
    )?;
    if config.decay_mode == DecayMode::ParameterEma {
        for g in mask.iter() {
            let cur = &state.params.group(g).values;
            let avg = state.ema[g.index()].get_or_insert_with(|| cur.clone());
            for (a, c) in avg.iter_mut().zip(cur) {
                *a = config.ema_decay * *a + (1.0 - config.ema_decay) * c;
            }
        }
    }
    state.phase_step += 1;
    state.history.push(eval.breakdown);
    Ok(())
}

/// Training data for a phase.
#[derive(Clone, Copy, Debug)]
pub enum TrainData<'a> {
    Pairs(&'a [PairedSample]),
    Scenes(&'a [LabeledScene]),
}

impl TrainData<'_> {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Pairs(p) => p.len(),
            TrainData::Scenes(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Run `n_steps` more steps of the state's phase.
pub fn train_steps(
    state: &mut TrainState,
    data: TrainData,
    config: &TrainConfig,
    n_steps: u64,
) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(arg_err!("empty training set"));
    }
    for _ in 0..n_steps {
        match (state.phase, data) {
            (Phase::PretrainSr, TrainData::Pairs(d)) => sr_step(state, d, config)?,
            (Phase::Joint, TrainData::Pairs(d)) => joint_step(state, d, config)?,
            (Phase::PretrainDet, TrainData::Scenes(d)) => det_step(state, d, config)?,
            (p, _) => return Err(arg_err!("wrong data kind for phase {}", p.name())),
        }
        state.step += 1;
        if state.step % 50 == 0 {
            if let Some(b) = state.history.last() {
                log::debug!(
                    "{} step {} total {:.6}",
                    state.phase.name(),
                    state.step,
                    b.total
                );
            }
        }
    }
    Ok(())
}

/// Finish the configured number of steps from wherever `state` stands.
pub fn resume(state: &mut TrainState, data: TrainData, config: &TrainConfig) -> Result<()> {
    let total = config.total_steps(data.len());
    let left = total.saturating_sub(state.step);
    train_steps(state, data, config, left)
}

fn fresh(net: &NetConfig, config: &TrainConfig, phase: Phase) -> Result<TrainState> {
    config.validate()?;
    let params = ParameterSet::new(net.clone(), config.seed)?;
    Ok(TrainState::new(
        params,
        &TrainConfig {
            phase,
            ..config.clone()
        },
    ))
}

/// Adversarial super-resolution pretraining on paired images.
pub fn pretrain_sr(
    data: &[PairedSample],
    net: &NetConfig,
    config: &TrainConfig,
) -> Result<TrainState> {
    let mut s = fresh(net, config, Phase::PretrainSr)?;
    resume(&mut s, TrainData::Pairs(data), config)?;
    Ok(s)
}

/// Detector pretraining on HR scenes.
pub fn pretrain_detector(
    data: &[LabeledScene],
    net: &NetConfig,
    config: &TrainConfig,
) -> Result<TrainState> {
    let mut s = fresh(net, config, Phase::PretrainDet)?;
    resume(&mut s, TrainData::Scenes(data), config)?;
    Ok(s)
}

/// Start the joint phase from the generator and discriminators of
/// `init_sr` and the detector of `init_det`, with fresh optimizer moments.
pub fn joint_init(
    init_sr: &TrainState,
    init_det: &TrainState,
    config: &TrainConfig,
) -> Result<TrainState> {
    config.validate()?;
    if init_sr.params.config() != init_det.params.config() {
        return Err(arg_err!(
            "initial states were built for different network configurations"
        ));
    }
    let mut params = init_sr.params.clone();
    params.copy_group_from(&init_det.params, GroupId::Det)?;
    Ok(TrainState::new(
        params,
        &TrainConfig {
            phase: Phase::Joint,
            ..config.clone()
        },
    ))
}

pub fn joint_train(
    data: &[PairedSample],
    init_sr: &TrainState,
    init_det: &TrainState,
    config: &TrainConfig,
) -> Result<TrainState> {
    let mut s = joint_init(init_sr, init_det, config)?;
    resume(&mut s, TrainData::Pairs(data), config)?;
    Ok(s)
}

#[cfg(test)]
mod tests;
