use alloc::vec::Vec;

use super::adversarial::{adversarial_grad, adversarial_loss, AdversarialForm, Side};
use super::detection::{detection_loss, DetTerms, DetectionLoss};
use super::pixel::{content_loss, feature_mse, l1_reconstruction};
use super::LossWeights;
use crate::boxes::{encode_targets, DetectionTargets};
use crate::error::{arg_err, dim_err, Result};
use crate::graph::{BnRecord, Graph, NodeId, NormMode};
use crate::imaging::{bicubic_downscale, PairedSample};
use crate::nets::{
    detector_graph, discriminator_graph, generator_graph, perceptual_graph, GroupId, GroupMask,
    NetConfig, ParamGrads, ParameterSet, Which,
};
use crate::tensor::{Shape, Tensor};

/// Stacked tensors and encoded targets for a minibatch of pairs.
#[derive(Clone, Debug)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    /// HR downscaled 2x: the real reference for the mid-scale discriminator.
    pub hr_mid: Tensor,
    pub targets: Vec<DetectionTargets>,
}

impl Batch {
    pub fn new(samples: &[&PairedSample], cfg: &NetConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(arg_err!("empty batch"));
        }
        let lr: Vec<&Tensor> = samples.iter().map(|s| s.lr.tensor()).collect();
        let hr: Vec<&Tensor> = samples.iter().map(|s| s.hr.tensor()).collect();
        let mids = samples
            .iter()
            .map(|s| bicubic_downscale(&s.hr, 2).map(|m| m.into_tensor()))
            .collect::<Result<Vec<_>>>()?;
        let mids_ref: Vec<&Tensor> = mids.iter().collect();
        let targets = samples
            .iter()
            .map(|s| encode_targets(&s.labels, &cfg.anchors, cfg.detector_grids))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            lr: Tensor::stack(&lr)?,
            hr: Tensor::stack(&hr)?,
            hr_mid: Tensor::stack(&mids_ref)?,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.lr.shape().n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Multipliers applied to the four terms when forming the total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub content: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub detection: f64,
}

impl TermWeights {
    /// `1, alpha, beta, gamma`.
    pub fn joint(w: &LossWeights) -> Self {
        TermWeights {
            content: 1.0,
            perceptual: w.alpha,
            adversarial: w.beta,
            detection: w.gamma,
        }
    }

    /// The super-resolution pretraining objective: no detection term.
    pub fn sr_only(w: &LossWeights) -> Self {
        TermWeights {
            detection: 0.0,
            ..Self::joint(w)
        }
    }

    pub fn only_detection() -> Self {
        TermWeights {
            content: 0.0,
            perceptual: 0.0,
            adversarial: 0.0,
            detection: 1.0,
        }
    }

    /// Only term `i` (0 content, 1 perceptual, 2 adversarial, 3 detection)
    /// keeps its weight.
    pub fn isolate(&self, i: usize) -> Self {
        let mut a = [
            self.content,
            self.perceptual,
            self.adversarial,
            self.detection,
        ];
        for (j, v) in a.iter_mut().enumerate() {
            if j != i {
                *v = 0.0;
            }
        }
        TermWeights {
            content: a[0],
            perceptual: a[1],
            adversarial: a[2],
            detection: a[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.content,
            self.perceptual,
            self.adversarial,
            self.detection,
        ]
    }
}

/// Per-term values and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub content: f64,
    pub perceptual: f64,
    pub adversarial_g: f64,
    pub detection: f64,
    pub total: f64,
    pub weights: TermWeights,
}

impl LossBreakdown {
    /// `content + a perceptual + b adversarial + g detection` under the
    /// stored weights.
    pub fn weighted_sum(&self) -> f64 {
        let w = &self.weights;
        w.content * self.content
            + w.perceptual * self.perceptual
            + w.adversarial * self.adversarial_g
            + w.detection * self.detection
    }

    pub fn is_finite(&self) -> bool {
        [
            self.content,
            self.perceptual,
            self.adversarial_g,
            self.detection,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct JointOptions {
    pub terms: TermWeights,
    /// Groups that receive parameter gradients.
    pub mask: GroupMask,
    pub mode: NormMode,
    pub form: AdversarialForm,
    pub det_terms: DetTerms,
    /// Also return the gradient with respect to the 4x generator output.
    pub want_sr_grad: bool,
}

impl JointOptions {
    pub fn new(terms: TermWeights, mask: GroupMask, mode: NormMode) -> Self {
        JointOptions {
            terms,
            mask,
            mode,
            form: AdversarialForm::NonSaturating,
            det_terms: DetTerms::ALL,
            want_sr_grad: false,
        }
    }
}

pub struct JointEval {
    pub breakdown: LossBreakdown,
    pub grads: ParamGrads,
    pub sr_grad: Option<Tensor>,
    pub sr_full: Tensor,
    pub sr_mid: Tensor,
    pub bn_records: Vec<BnRecord>,
    pub detection: Option<DetectionLoss>,
}

fn prob_external(g: &mut Graph, p: NodeId, form: AdversarialForm) -> Result<(NodeId, f64)> {
    let probs = g.value(p).data().to_vec();
    let v = adversarial_loss(&[], &probs, Side::Generator, form);
    let (_, d) = adversarial_grad(&[], &probs, Side::Generator, form);
    let shape = g.value(p).shape();
    let id = g.external(p, v, Tensor::from_vec(shape, d)?)?;
    Ok((id, v))
}

/// Generator forward plus every weighted term, then one reverse pass.
/// Terms with zero weight are skipped and reported as 0.
pub fn joint_objective(
    params: &ParameterSet,
    batch: &Batch,
    weights: &LossWeights,
    opts: &JointOptions,
) -> Result<JointEval> {
    weights.validate()?;
    let cfg = params.config();
    let tw = opts.terms;
    let mut g = Graph::new(params, opts.mask);
    let lr = g.input(batch.lr.clone(), opts.want_sr_grad);
    let gen = generator_graph(&mut g, lr, opts.mode)?;
    if g.value(gen.full).shape() != batch.hr.shape() {
        return Err(dim_err!(
            "SR output {:?} vs HR {:?}",
            g.value(gen.full).shape(),
            batch.hr.shape()
        ));
    }
    let mut sum: Vec<(NodeId, f64)> = Vec::new();
    let mut bd = LossBreakdown {
        content: 0.0,
        perceptual: 0.0,
        adversarial_g: 0.0,
        detection: 0.0,
        total: 0.0,
        weights: tw,
    };

    if tw.content != 0.0 {
        let mut c = content_loss(&batch.hr, g.value(gen.full))?;
        if weights.lambda_l1 != 0.0 {
            let l1 = l1_reconstruction(&batch.hr, g.value(gen.full))?;
            c.value += weights.lambda_l1 * l1.value;
            c.grad.add_scaled(&l1.grad, weights.lambda_l1);
        }
        bd.content = c.value;
        let id = g.external(gen.full, c.value, c.grad)?;
        sum.push((id, tw.content));
    }
    if tw.perceptual != 0.0 {
        let layer = cfg.perceptual_layer;
        let hr = g.input(batch.hr.clone(), false);
        let f_hr = perceptual_graph(&mut g, hr, layer)?;
        let f_sr = perceptual_graph(&mut g, gen.full, layer)?;
        let p = feature_mse(g.value(f_hr), g.value(f_sr))?;
        bd.perceptual = p.value;
        let id = g.external(f_sr, p.value, p.grad)?;
        sum.push((id, tw.perceptual));
    }
    if tw.adversarial != 0.0 {
        let p1 = discriminator_graph(&mut g, gen.mid, Which::D1)?;
        let p2 = discriminator_graph(&mut g, gen.full, Which::D2)?;
        let (e1, v1) = prob_external(&mut g, p1, opts.form)?;
        let (e2, v2) = prob_external(&mut g, p2, opts.form)?;
        bd.adversarial_g = v1 + v2;
        sum.push((e1, tw.adversarial));
        sum.push((e2, tw.adversarial));
    }
    let mut det = None;
    if tw.detection != 0.0 {
        let outs = detector_graph(&mut g, gen.full)?;
        let d = detection_loss(
            outs.map(|o| g.value(o)),
            &batch.targets,
            weights,
            opts.det_terms,
        )?;
        bd.detection = d.total;
        for (s, o) in outs.iter().enumerate() {
            let id = g.external(*o, if s == 0 { d.total } else { 0.0 }, d.grads[s].clone())?;
            sum.push((id, tw.detection));
        }
        det = Some(d);
    }
    if sum.is_empty() {
        return Err(arg_err!("every term weight is zero"));
    }
    let root = g.weighted_sum(&sum)?;
    bd.total = g.value(root).data()[0];
    let grads = g.backward(root)?;
    let pgrads = g.param_grads(&grads);
    let sr_grad = if opts.want_sr_grad {
        Some(
            grads
                .wrt(gen.full)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(batch.hr.shape())),
        )
    } else {
        None
    };
    let sr_full = g.value(gen.full).clone();
    let sr_mid = g.value(gen.mid).clone();
    let bn_records = g.take_bn_records();
    Ok(JointEval {
        breakdown: bd,
        grads: pgrads,
        sr_grad,
        sr_full,
        sr_mid,
        bn_records,
        detection: det,
    })
}

/// All four terms for one pair, with stored normalization statistics.
pub fn joint_loss(
    sample: &PairedSample,
    params: &ParameterSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let batch = Batch::new(&[sample], params.config())?;
    let opts = JointOptions::new(
        TermWeights::joint(weights),
        GroupMask::NONE,
        NormMode::Frozen,
    );
    Ok(joint_objective(params, &batch, weights, &opts)?.breakdown)
}

/// Discriminator-side objective of both discriminators on real HR (and its
/// 2x downscale) against generated images, with gradients for `W_dis1` and
/// `W_dis2`.
pub fn discriminator_objective(
    params: &ParameterSet,
    batch: &Batch,
    sr_full: &Tensor,
    sr_mid: &Tensor,
) -> Result<(f64, ParamGrads)> {
    let mask = GroupMask::of(&[GroupId::Dis1, GroupId::Dis2]);
    let mut g = Graph::new(params, mask);
    let mut sum = Vec::new();
    let mut total = 0.0;
    for (which, real, fake) in [
        (Which::D1, &batch.hr_mid, sr_mid),
        (Which::D2, &batch.hr, sr_full),
    ] {
        let r = g.input(real.clone(), false);
        let f = g.input(fake.clone(), false);
        let pr = discriminator_graph(&mut g, r, which)?;
        let pf = discriminator_graph(&mut g, f, which)?;
        let (vr, vf) = (g.value(pr).data().to_vec(), g.value(pf).data().to_vec());
        let v = adversarial_loss(
            &vr,
            &vf,
            Side::Discriminator,
            AdversarialForm::NonSaturating,
        );
        let (dr, df) = adversarial_grad(
            &vr,
            &vf,
            Side::Discriminator,
            AdversarialForm::NonSaturating,
        );
        total += v;
        let shape = Shape::new(vr.len(), 1, 1, 1);
        // the loss value rides on the real-branch node only
        let er = g.external(pr, v, Tensor::from_vec(shape, dr)?)?;
        let ef = g.external(pf, 0.0, Tensor::from_vec(shape, df)?)?;
        sum.push((er, 1.0));
        sum.push((ef, 1.0));
    }
    let root = g.weighted_sum(&sum)?;
    let grads = g.backward(root)?;
    Ok((total, g.param_grads(&grads)))
}

/// Detection loss of the detector applied directly to HR images.
pub fn detector_objective(
    params: &ParameterSet,
    hr: &Tensor,
    targets: &[DetectionTargets],
    weights: &LossWeights,
    terms: DetTerms,
    mask: GroupMask,
) -> Result<(DetectionLoss, ParamGrads)> {
    let mut g = Graph::new(params, mask);
    let x = g.input(hr.clone(), false);
    let outs = detector_graph(&mut g, x)?;
    let d = detection_loss(outs.map(|o| g.value(o)), targets, weights, terms)?;
    let mut sum = Vec::with_capacity(3);
    for (s, o) in outs.iter().enumerate() {
        let id = g.external(*o, if s == 0 { d.total } else { 0.0 }, d.grads[s].clone())?;
        sum.push((id, 1.0));
    }
    let root = g.weighted_sum(&sum)?;
    let grads = g.backward(root)?;
    Ok((d, g.param_grads(&grads)))
}
