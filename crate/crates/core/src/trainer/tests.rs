use super::*;
use crate::imaging::synthesize_scene;
use crate::nets::PerceptualKind;
use alloc::vec;

fn small() -> NetConfig {
    NetConfig {
        n_residual_blocks: 1,
        feature_width: 4,
        disc_width: 2,
        det_width: 2,
        perceptual: PerceptualKind::Stack { widths: vec![4, 4] },
        perceptual_layer: 2,
        ..NetConfig::desk().with_base_resolution(16)
    }
}

fn scenes(n: u64) -> Vec<LabeledScene> {
    (0..n)
        .map(|s| synthesize_scene(100 + s, 64, 2).unwrap())
        .collect()
}

fn pairs(n: u64) -> Vec<PairedSample> {
    scenes(n)
        .iter()
        .map(|s| PairedSample::from_scene(s).unwrap())
        .collect()
}

fn cfg(steps: u64) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        max_steps: Some(steps),
        seed: 5,
        weights: LossWeights {
            alpha: 1e-3,
            beta: 1e-2,
            gamma: 1e-2,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn step_schedule() {
    let c = TrainConfig::default();
    assert_eq!(lr_schedule(&c, 0), 1e-4);
    assert_eq!(lr_schedule(&c, 4), 1e-4);
    assert!((lr_schedule(&c, 5) - 1e-5).abs() < 1e-20);
    assert!((lr_schedule(&c, 10) - 1e-6).abs() < 1e-21);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        lr_decay_factor: 1.5,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert_eq!(
        TrainConfig {
            batch_size: 3,
            epochs: 2,
            ..TrainConfig::default()
        }
        .total_steps(7),
        6
    );
}

#[test]
fn phase_names_roundtrip() {
    for p in [Phase::PretrainSr, Phase::PretrainDet, Phase::Joint] {
        assert_eq!(Phase::from_name(p.name()), Some(p));
    }
    assert_eq!(Phase::from_name("x"), None);
}

#[test]
fn adam_with_zero_rate_keeps_values() {
    let mut p = ParameterSet::new(small(), 1).unwrap();
    let before = p.clone();
    let mut grads = ParamGrads::default();
    grads.groups[GroupId::Sr.index()] = Some(vec![1.0; p.group(GroupId::Sr).values.len()]);
    let mut adam = Adam::new(0.9, 0.999, 1e-8);
    adam.step(&mut p, &grads, GroupMask::of(&[GroupId::Sr]), 0.0)
        .unwrap();
    assert_eq!(p, before);
    assert_eq!(adam.group(GroupId::Sr).unwrap().t, 1);
}

#[test]
fn adam_first_step_moves_by_rate() {
    let mut p = ParameterSet::new(small(), 1).unwrap();
    let before = p.group(GroupId::Det).values.clone();
    let mut grads = ParamGrads::default();
    grads.groups[GroupId::Det.index()] = Some(
        before
            .iter()
            .enumerate()
            .map(|(i, _)| if i % 2 == 0 { 3.0 } else { -0.5 })
            .collect(),
    );
    Adam::new(0.9, 0.999, 0.0)
        .step(&mut p, &grads, GroupMask::of(&[GroupId::Det]), 0.01)
        .unwrap();
    for (i, (a, b)) in p.group(GroupId::Det).values.iter().zip(&before).enumerate() {
        let want = if i % 2 == 0 { -0.01 } else { 0.01 };
        assert!((a - b - want).abs() < 1e-12);
    }
}

#[test]
fn clipping_bounds_the_norm() {
    let mut g = ParamGrads::default();
    g.groups[0] = Some(vec![3.0, 4.0]);
    g.groups[1] = Some(vec![12.0]);
    let mask = GroupMask::of(&[GroupId::ALL[0], GroupId::ALL[1]]);
    assert_eq!(clip_grad_norm(&mut g, mask, 6.5), 13.0);
    assert_eq!(g.groups[0].as_deref(), Some(&[1.5, 2.0][..]));
    assert_eq!(g.groups[1].as_deref(), Some(&[6.0][..]));
}

#[test]
fn sr_phase_is_deterministic_and_resumable() {
    let data = pairs(3);
    let c = cfg(5);
    let a = pretrain_sr(&data, &small(), &c).unwrap();
    let b = pretrain_sr(&data, &small(), &c).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.step, 5);
    assert_eq!(a.epoch, 1);

    let mut part = TrainState::new(ParameterSet::new(small(), c.seed).unwrap(), &c);
    train_steps(&mut part, TrainData::Pairs(&data), &c, 2).unwrap();
    let mut copy = part.clone();
    resume(&mut copy, TrainData::Pairs(&data), &c).unwrap();
    assert_eq!(copy, a);
}

#[test]
fn sr_phase_leaves_other_groups_alone() {
    let data = pairs(2);
    let c = cfg(3);
    let init = ParameterSet::new(small(), c.seed).unwrap();
    let s = pretrain_sr(&data, &small(), &c).unwrap();
    assert_eq!(s.params.group(GroupId::Vgg), init.group(GroupId::Vgg));
    assert_eq!(s.params.group(GroupId::Det), init.group(GroupId::Det));
    assert_ne!(
        s.params.group(GroupId::Sr).values,
        init.group(GroupId::Sr).values
    );
    assert_ne!(
        s.params.group(GroupId::Dis1).values,
        init.group(GroupId::Dis1).values
    );
}

#[test]
fn plain_mse_when_other_weights_are_zero() {
    let data = pairs(2);
    let c = TrainConfig {
        weights: LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..cfg(3).weights
        },
        ..cfg(3)
    };
    let init = ParameterSet::new(small(), c.seed).unwrap();
    let s = pretrain_sr(&data, &small(), &c).unwrap();
    assert!(s
        .history
        .iter()
        .all(|b| b.total == b.content && b.perceptual == 0.0 && b.adversarial_g == 0.0));
    assert_eq!(s.params.group(GroupId::Dis1), init.group(GroupId::Dis1));
}

#[test]
fn detector_phase_trains_only_the_detector() {
    let data = scenes(2);
    let c = cfg(3);
    let init = ParameterSet::new(small(), c.seed).unwrap();
    let s = pretrain_detector(&data, &small(), &c).unwrap();
    assert_eq!(s.params.group(GroupId::Sr), init.group(GroupId::Sr));
    assert_ne!(
        s.params.group(GroupId::Det).values,
        init.group(GroupId::Det).values
    );
    assert!(s.history.iter().all(|b| b.total == b.detection));
    assert!(train_steps(&mut s.clone(), TrainData::Pairs(&pairs(1)), &c, 1).is_err());
}

#[test]
fn joint_phase_respects_zero_detection_weight() {
    let data = pairs(2);
    let c = cfg(2);
    let sr = pretrain_sr(&data, &small(), &c).unwrap();
    let det = pretrain_detector(&scenes(2), &small(), &c).unwrap();
    let j = TrainConfig {
        phase: Phase::Joint,
        weights: LossWeights {
            gamma: 0.0,
            ..c.weights
        },
        ..c.clone()
    };
    let s = joint_train(&data, &sr, &det, &j).unwrap();
    assert_eq!(s.params.group(GroupId::Det), det.params.group(GroupId::Det));
    assert_ne!(
        s.params.group(GroupId::Sr).values,
        sr.params.group(GroupId::Sr).values
    );

    let s = joint_train(
        &data,
        &sr,
        &det,
        &TrainConfig {
            phase: Phase::Joint,
            ..c.clone()
        },
    )
    .unwrap();
    assert_ne!(
        s.params.group(GroupId::Det).values,
        det.params.group(GroupId::Det).values
    );
    assert_eq!(s.phase_step, 2);
}

#[test]
fn joint_parameter_averaging() {
    let data = pairs(2);
    let c = cfg(2);
    let sr = pretrain_sr(&data, &small(), &c).unwrap();
    let det = pretrain_detector(&scenes(2), &small(), &c).unwrap();
    let j = TrainConfig {
        phase: Phase::Joint,
        decay_mode: DecayMode::ParameterEma,
        ema_decay: 0.5,
        ..c
    };
    let s = joint_train(&data, &sr, &det, &j).unwrap();
    let avg = s.averaged_params();
    assert!(s.ema[GroupId::Sr.index()].is_some());
    assert_ne!(
        avg.group(GroupId::Sr).values,
        s.params.group(GroupId::Sr).values
    );
    assert_eq!(avg.group(GroupId::Dis1), s.params.group(GroupId::Dis1));
}

#[test]
fn joint_rejects_mismatched_networks() {
    let c = cfg(1);
    let a = TrainState::new(ParameterSet::new(small(), 1).unwrap(), &c);
    let b = TrainState::new(
        ParameterSet::new(
            NetConfig {
                feature_width: 8,
                ..small()
            },
            1,
        )
        .unwrap(),
        &c,
    );
    assert!(joint_init(&a, &b, &c).is_err());
}

#[test]
fn small_gradient_check_passes() {
    let p = ParameterSet::new(small(), 3).unwrap();
    let s = &pairs(1)[0];
    let w = LossWeights {
        alpha: 0.5,
        beta: 0.2,
        gamma: 0.1,
        ..LossWeights::default()
    };
    let r = gradient_check(s, &p, &w, 6, 1e-5).unwrap();
    for l in &r.lines {
        assert!(
            l.passed(),
            "{}: {} > {} at {}",
            l.name,
            l.max_rel_err,
            l.tolerance,
            l.worst
        );
    }
    assert!(r.line("split/residual").is_some());
    assert!(r.verify().is_ok());
}
