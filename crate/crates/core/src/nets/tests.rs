use super::*;
use crate::boxes::ANCHORS_PER_SCALE;
use crate::graph::Graph;
use crate::rng::{stream, uniform};
use crate::tensor::Shape;

fn small() -> NetConfig {
    NetConfig {
        n_residual_blocks: 2,
        feature_width: 8,
        disc_width: 4,
        det_width: 4,
        perceptual: PerceptualKind::Stack {
            widths: alloc::vec![4, 8],
        },
        perceptual_layer: 2,
        ..NetConfig::desk().with_base_resolution(16)
    }
}

fn noise_image(c: usize, size: usize, seed: u64) -> ImageTensor {
    let mut r = stream(seed, 2);
    ImageTensor::from_fn(c, size, size, |_, _, _| uniform(&mut r, 0.0, 1.0)).unwrap()
}

#[test]
fn generator_output_sizes_and_range() {
    let p = ParameterSet::new(small(), 1).unwrap();
    let out = generator_forward(&p, &noise_image(3, 16, 1)).unwrap();
    assert_eq!((out.mid.height(), out.mid.width()), (32, 32));
    assert_eq!(
        (out.full.channels(), out.full.height(), out.full.width()),
        (3, 64, 64)
    );
    assert!(out.full.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn generator_rejects_wrong_size() {
    let p = ParameterSet::new(small(), 1).unwrap();
    assert!(generator_forward(&p, &noise_image(3, 32, 1)).is_err());
}

#[test]
fn residual_block_is_identity_when_last_affine_is_zero() {
    let mut p = ParameterSet::new(small(), 2).unwrap();
    let blk = p.layouts().generator.blocks[0].clone();
    for slot in [blk.bn2.gamma, blk.bn2.beta] {
        p.group_mut(slot.group).values[slot.range()]
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let x = Tensor::from_fn(Shape::new(1, 8, 5, 5), |_, c, y, x| {
        (c + 2 * y + 3 * x) as f64 * 0.01
    });
    let mut g = Graph::new(&p, GroupMask::NONE);
    let xi = g.input(x.clone(), false);
    let y = generator::residual_block(&mut g, xi, &blk, NormMode::Frozen, 1e-5).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn discriminator_gives_probabilities() {
    let p = ParameterSet::new(small(), 3).unwrap();
    for (which, size) in [(Which::D1, 32), (Which::D2, 64)] {
        let v = discriminator_forward(&p, &noise_image(3, size, 4), which).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }
    assert!(discriminator_forward(&p, &noise_image(3, 32, 4), Which::D2).is_err());
}

#[test]
fn discriminator_has_eleven_convs() {
    let p = ParameterSet::new(small(), 3).unwrap();
    assert_eq!(
        p.layouts().dis1.convs.len(),
        discriminator::DISCRIMINATOR_LAYERS
    );
    assert_eq!(p.layouts().dis2.input_size, 64);
}

#[test]
fn detector_grid_shapes() {
    let cfg = small();
    let p = ParameterSet::new(cfg.clone(), 5).unwrap();
    let encs = detector_forward(&p, &noise_image(3, 64, 6)).unwrap();
    for (s, e) in encs.iter().enumerate() {
        assert_eq!(e.grid, cfg.detector_grids[s]);
        assert_eq!(
            e.values().len(),
            ANCHORS_PER_SCALE * (5 + cfg.num_classes) * e.grid * e.grid
        );
    }
}

#[test]
fn perceptual_feature_shapes() {
    let cfg = small();
    let p = ParameterSet::new(cfg.clone(), 5).unwrap();
    let img = noise_image(3, 64, 7);
    assert_eq!(
        perceptual_features(&p, &img, 0).unwrap().shape(),
        Shape::new(1, 3, 64, 64)
    );
    assert_eq!(
        perceptual_features(&p, &img, 1).unwrap().shape(),
        Shape::new(1, 4, 32, 32)
    );
    assert_eq!(
        perceptual_features(&p, &img, 2).unwrap().shape(),
        Shape::new(1, 8, 16, 16)
    );
    assert_eq!(
        p.layouts().perceptual.feature_shape(&cfg, 64, 2).unwrap(),
        (8, 16, 16)
    );
    assert!(perceptual_features(&p, &img, 3).is_err());
}

#[test]
fn perceptual_weights_ignore_the_run_seed() {
    let a = ParameterSet::new(small(), 1).unwrap();
    let b = ParameterSet::new(small(), 2).unwrap();
    assert_eq!(a.group(GroupId::Vgg), b.group(GroupId::Vgg));
    assert_ne!(a.group(GroupId::Sr), b.group(GroupId::Sr));
    assert!(!a.is_trainable(GroupId::Vgg));
}

#[test]
fn perceptual_group_cannot_be_unfrozen() {
    let mut p = ParameterSet::new(small(), 1).unwrap();
    assert!(p.set_trainable(GroupId::Vgg, true).is_err());
    assert!(p.set_trainable(GroupId::Det, false).is_ok());
}

#[test]
fn same_seed_same_parameters() {
    assert_eq!(
        ParameterSet::new(small(), 9).unwrap(),
        ParameterSet::new(small(), 9).unwrap()
    );
}

#[test]
fn batch_forward_matches_single() {
    let p = ParameterSet::new(small(), 4).unwrap();
    let a = noise_image(3, 16, 10);
    let b = noise_image(3, 16, 11);
    let stacked = Tensor::stack(&[a.tensor(), b.tensor()]).unwrap();
    let out = generator_batch(&p, &stacked, NormMode::Frozen).unwrap();
    let single = generator_forward(&p, &b).unwrap();
    assert_eq!(out.sample(1), single.full.data());
}
