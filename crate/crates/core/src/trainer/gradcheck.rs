use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NormMode};
use crate::imaging::PairedSample;
use crate::losses::{
    content_loss, detection_loss, joint_objective, l1_reconstruction, Batch, DetTerms,
    JointOptions, LossBreakdown, LossWeights, TermWeights,
};
use crate::nets::{detector_graph, GroupId, GroupMask, ParameterSet};
use crate::rng;
use crate::tensor::Tensor;

const COORD_DOMAIN: u64 = 0x4743_4b;
/// Tolerance of finite-difference comparisons.
pub const FD_TOLERANCE: f64 = 1e-3;
/// Tolerance of decomposition residuals.
pub const DECOMP_TOLERANCE: f64 = 1e-6;
/// Gradients below this magnitude are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-9;

const TERM_NAMES: [&str; 4] = ["content", "perceptual", "adversarial", "detection"];

/// Outcome of one comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// The coordinate with the largest error.
    pub worst: String,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub lines: Vec<CheckLine>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    /// Error naming the first failing comparison.
    pub fn verify(&self) -> Result<()> {
        match self.lines.iter().find(|l| !l.passed()) {
            None => Ok(()),
            Some(l) => Err(Error::GradCheck(format!(
                "{}: relative error {:.3e} >= {:.0e} at {}",
                l.name, l.max_rel_err, l.tolerance, l.worst
            ))),
        }
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn breakdown(
    params: &ParameterSet,
    batch: &Batch,
    w: &LossWeights,
    terms: TermWeights,
) -> Result<LossBreakdown> {
    let opts = JointOptions::new(terms, GroupMask::NONE, NormMode::Frozen);
    Ok(joint_objective(params, batch, w, &opts)?.breakdown)
}

fn term_values(b: &LossBreakdown) -> [f64; 4] {
    [b.content, b.perceptual, b.adversarial_g, b.detection]
}

/// Central differences on the given coordinates of one group, for the whole
/// objective (`None`) and for each listed term on its own. One pair of
/// evaluations per coordinate serves every line, since each weighted term
/// is reported separately.
fn fd_lines(
    params: &mut ParameterSet,
    batch: &Batch,
    w: &LossWeights,
    joint: TermWeights,
    coords: &[(GroupId, usize)],
    eps: f64,
    lines: &[Option<usize>],
) -> Result<Vec<CheckLine>> {
    let group = coords.first().map_or(GroupId::Sr, |c| c.0);
    let mask = GroupMask::of(&[group]);
    let mut analytic = Vec::with_capacity(lines.len());
    let mut out = Vec::with_capacity(lines.len());
    for &l in lines {
        let terms = l.map_or(joint, |i| joint.isolate(i));
        analytic.push(
            joint_objective(
                params,
                batch,
                w,
                &JointOptions::new(terms, mask, NormMode::Frozen),
            )?
            .grads,
        );
        let name = l.map_or("joint", |i| TERM_NAMES[i]);
        out.push(CheckLine {
            name: format!("fd/{name}/{}", group.name()),
            max_rel_err: 0.0,
            tolerance: FD_TOLERANCE,
            worst: String::new(),
        });
    }
    let weights = joint.as_array();
    for &(g, i) in coords {
        let orig = params.group(g).values[i];
        params.group_mut(g).values[i] = orig + eps;
        let up = breakdown(params, batch, w, joint);
        params.group_mut(g).values[i] = orig - eps;
        let down = breakdown(params, batch, w, joint);
        params.group_mut(g).values[i] = orig;
        let (up, down) = (up?, down?);
        for ((&l, grads), line) in lines.iter().zip(&analytic).zip(out.iter_mut()) {
            let n = match l {
                None => (up.total - down.total) / (2.0 * eps),
                Some(t) => weights[t] * (term_values(&up)[t] - term_values(&down)[t]) / (2.0 * eps),
            };
            let a = grads.get(g).map_or(0.0, |v| v[i]);
            let e = rel_err(a, n);
            if e >= line.max_rel_err {
                line.max_rel_err = e;
                line.worst = format!("{}[{i}] analytic {a:.6e} numeric {n:.6e}", g.name());
            }
        }
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    crate::math::sqrt(v.iter().map(|x| x * x).sum())
}

fn residual_line(name: &str, whole: &[f64], parts: &[Vec<f64>]) -> CheckLine {
    let mut diff = whole.to_vec();
    for p in parts {
        for (d, x) in diff.iter_mut().zip(p) {
            *d -= x;
        }
    }
    let r = norm(&diff) / norm(whole).max(REL_FLOOR);
    CheckLine {
        name: name.into(),
        max_rel_err: r,
        tolerance: DECOMP_TOLERANCE,
        worst: format!("residual norm {:.3e}", norm(&diff)),
    }
}

/// Compare analytic gradients of the joint objective against central
/// differences on `n_coords` random coordinates each of `W_SR` and `W_d`,
/// per term and in total; check that the detection gradient at the
/// detector outputs splits exactly into its localization, extent and
/// confidence parts; and check that the gradient at the SR image is the sum
/// of the per-term gradients.
///
/// Normalization layers use stored statistics throughout.
pub fn gradient_check(
    sample: &PairedSample,
    params: &ParameterSet,
    weights: &LossWeights,
    n_coords: usize,
    eps: f64,
) -> Result<GradCheckReport> {
    weights.validate()?;
    let mut p = params.clone();
    let batch = Batch::new(&[sample], p.config())?;
    let mut r = rng::stream(n_coords as u64, COORD_DOMAIN);
    let mut pick = |g: GroupId| -> Vec<(GroupId, usize)> {
        let len = params.group(g).values.len();
        (0..n_coords).map(|_| (g, r.random_range(0..len))).collect()
    };
    let sr_coords = pick(GroupId::Sr);
    let det_coords = pick(GroupId::Det);
    let joint = TermWeights::joint(weights);
    let mut report = GradCheckReport::default();

    // (a) finite differences, whole objective and each active term
    let active: Vec<usize> = (0..4).filter(|&i| joint.as_array()[i] != 0.0).collect();
    let mut sr_lines = vec![None];
    sr_lines.extend(active.iter().map(|&i| Some(i)));
    report.lines.extend(fd_lines(
        &mut p, &batch, weights, joint, &sr_coords, eps, &sr_lines,
    )?);
    let det_lines: Vec<Option<usize>> = if active.contains(&3) {
        vec![None, Some(3)]
    } else {
        vec![None]
    };
    report.lines.extend(fd_lines(
        &mut p,
        &batch,
        weights,
        joint,
        &det_coords,
        eps,
        &det_lines,
    )?);

    // (c) per-term gradients at the SR image add up to the whole
    let mut opts = JointOptions::new(joint, GroupMask::NONE, NormMode::Frozen);
    opts.want_sr_grad = true;
    let whole = joint_objective(&p, &batch, weights, &opts)?;
    let whole_grad = whole
        .sr_grad
        .clone()
        .unwrap_or_else(|| Tensor::zeros(batch.hr.shape()));
    let mut parts = Vec::new();
    for i in 0..4 {
        let t = joint.isolate(i);
        if t.as_array()[i] == 0.0 {
            continue;
        }
        opts.terms = t;
        let e = joint_objective(&p, &batch, weights, &opts)?;
        let gi = e.sr_grad.unwrap_or_else(|| Tensor::zeros(batch.hr.shape()));
        if i == 0 {
            // the content part on its own is the pixel-loss gradient
            let mut c = content_loss(&batch.hr, &whole.sr_full)?;
            if weights.lambda_l1 != 0.0 {
                c.grad.add_scaled(
                    &l1_reconstruction(&batch.hr, &whole.sr_full)?.grad,
                    weights.lambda_l1,
                );
            }
            let scale = c
                .grad
                .data()
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
                .max(REL_FLOOR);
            let (k, d) = gi
                .data()
                .iter()
                .zip(c.grad.data())
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold((0, 0.0), |acc, (k, d)| if d > acc.1 { (k, d) } else { acc });
            report.lines.push(CheckLine {
                name: "decomp/content".into(),
                max_rel_err: d / scale,
                tolerance: DECOMP_TOLERANCE,
                worst: format!("pixel {k}"),
            });
        }
        parts.push(gi.into_vec());
    }
    report
        .lines
        .push(residual_line("decomp/residual", whole_grad.data(), &parts));

    // (b) the detection gradient at the detector outputs, by part
    if weights.gamma != 0.0 {
        let mut g = Graph::new(&p, GroupMask::NONE);
        let x = g.input(whole.sr_full.clone(), false);
        let outs = detector_graph(&mut g, x)?;
        let raw = outs.map(|o| g.value(o).clone());
        let refs = [&raw[0], &raw[1], &raw[2]];
        let all = detection_loss(refs, &batch.targets, weights, DetTerms::ALL)?;
        let flat = |t: &[Tensor; 3]| {
            t.iter()
                .flat_map(|x| x.data().iter().copied())
                .collect::<Vec<f64>>()
        };
        let mut split = Vec::new();
        for (name, terms) in [
            ("coord", DetTerms::COORD),
            ("size", DetTerms::SIZE),
            ("conf", DetTerms::CONF),
        ] {
            let d = detection_loss(refs, &batch.targets, weights, terms)?;
            // each part against central differences on the raw outputs
            let mut line = CheckLine {
                name: format!("split/{name}"),
                max_rel_err: 0.0,
                tolerance: FD_TOLERANCE,
                worst: String::new(),
            };
            let mut raw_p = raw.clone();
            for _ in 0..n_coords {
                let s = r.random_range(0..3);
                let i = r.random_range(0..raw_p[s].len());
                let orig = raw_p[s].data()[i];
                raw_p[s].data_mut()[i] = orig + eps;
                let up = detection_loss(
                    [&raw_p[0], &raw_p[1], &raw_p[2]],
                    &batch.targets,
                    weights,
                    terms,
                )?
                .total;
                raw_p[s].data_mut()[i] = orig - eps;
                let down = detection_loss(
                    [&raw_p[0], &raw_p[1], &raw_p[2]],
                    &batch.targets,
                    weights,
                    terms,
                )?
                .total;
                raw_p[s].data_mut()[i] = orig;
                let (a, n) = (d.grads[s].data()[i], (up - down) / (2.0 * eps));
                let e = rel_err(a, n);
                if e >= line.max_rel_err {
                    line.max_rel_err = e;
                    line.worst = format!("scale {s} output {i} analytic {a:.6e} numeric {n:.6e}");
                }
            }
            report.lines.push(line);
            split.push(flat(&d.grads));
        }
        report
            .lines
            .push(residual_line("split/residual", &flat(&all.grads), &split));
    }
    Ok(report)
}
