use super::LossWeights;
use crate::boxes::{
    DetectionTargets, ANCHORS_PER_SCALE, FIELD_CLASS, FIELD_OBJ, FIELD_TH, FIELD_TW, FIELD_TX,
    FIELD_TY, MAX_LOG_SCALE, NUM_SCALES,
};
use crate::error::{dim_err, Result};
use crate::math::{exp, sigmoid, softplus, sqrt};
use crate::tensor::Tensor;

/// Widths and heights are floored here before the square root.
pub const SQRT_FLOOR: f64 = 1e-6;

/// Which parts of the detection loss to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetTerms {
    /// Center offsets.
    pub coord: bool,
    /// Square-rooted extents.
    pub size: bool,
    /// Objectness on both masks plus class scores.
    pub conf: bool,
}

impl DetTerms {
    pub const ALL: DetTerms = DetTerms {
        coord: true,
        size: true,
        conf: true,
    };
    pub const COORD: DetTerms = DetTerms {
        coord: true,
        size: false,
        conf: false,
    };
    pub const SIZE: DetTerms = DetTerms {
        coord: false,
        size: true,
        conf: false,
    };
    pub const CONF: DetTerms = DetTerms {
        coord: false,
        size: false,
        conf: true,
    };
}

/// Value of each part, the total, and the gradient of the total with
/// respect to the raw outputs of every scale.
#[derive(Clone, Debug)]
pub struct DetectionLoss {
    pub coord: f64,
    pub size: f64,
    pub conf: f64,
    pub total: f64,
    pub grads: [Tensor; NUM_SCALES],
}

/// Binary cross-entropy of target `t` against logit `z`, and its derivative.
#[inline]
fn bce_logit(t: f64, z: f64) -> (f64, f64) {
    (softplus(z) - t * z, sigmoid(z) - t)
}

/// Squared-error localization, objectness and class terms over all slots,
/// summed over scales and averaged over the batch. `pred[s]` is
/// `(N, 3 (5 + C), M_s, M_s)`; `targets[n]` belongs to sample `n`.
pub fn detection_loss(
    pred: [&Tensor; NUM_SCALES],
    targets: &[DetectionTargets],
    weights: &LossWeights,
    terms: DetTerms,
) -> Result<DetectionLoss> {
    let n = pred[0].shape().n;
    if targets.len() != n || n == 0 {
        return Err(dim_err!(
            "{} target sets for a batch of {}",
            targets.len(),
            n
        ));
    }
    let mut out = DetectionLoss {
        coord: 0.0,
        size: 0.0,
        conf: 0.0,
        total: 0.0,
        grads: pred.map(|p| Tensor::zeros(p.shape())),
    };
    let inv_n = 1.0 / n as f64;
    for s in 0..NUM_SCALES {
        let p = pred[s];
        let ps = p.shape();
        let m = targets[0].scales[s].grid;
        if ps.h != m
            || ps.w != m
            || ps.n != n
            || ps.c % ANCHORS_PER_SCALE != 0
            || ps.c / ANCHORS_PER_SCALE < 5
        {
            return Err(dim_err!(
                "scale {s}: prediction {:?} does not match grid {m}",
                ps
            ));
        }
        let per = ps.c / ANCHORS_PER_SCALE;
        let nc = per - 5;
        let mf = m as f64;
        for (b, tg) in targets.iter().enumerate() {
            let st = &tg.scales[s];
            if st.grid != m {
                return Err(dim_err!(
                    "scale {s}: target grid {} vs prediction grid {m}",
                    st.grid
                ));
            }
            let raw = p.sample(b);
            let grad = out.grads[s].sample_mut(b);
            let idx = |a: usize, f: usize, gy: usize, gx: usize| ((a * per + f) * m + gy) * m + gx;
            for a in 0..ANCHORS_PER_SCALE {
                let (aw, ah) = st.anchors[a];
                for gy in 0..m {
                    for gx in 0..m {
                        let slot = st.slot(a, gy, gx);
                        let io = idx(a, FIELD_OBJ, gy, gx);
                        match st.target(slot) {
                            None => {
                                if terms.conf {
                                    let (l, d) = bce_logit(0.0, raw[io]);
                                    out.conf += weights.lambda_noobj * l * inv_n;
                                    grad[io] += weights.lambda_noobj * d * inv_n;
                                }
                            }
                            Some(t) => {
                                if terms.coord {
                                    for (f, cell, target) in
                                        [(FIELD_TX, gx, t.cx), (FIELD_TY, gy, t.cy)]
                                    {
                                        let i = idx(a, f, gy, gx);
                                        let sg = sigmoid(raw[i]);
                                        let r = target - (cell as f64 + sg) / mf;
                                        out.coord += weights.lambda_coord * r * r * inv_n;
                                        grad[i] +=
                                            weights.lambda_coord * -2.0 * r * sg * (1.0 - sg) / mf
                                                * inv_n;
                                    }
                                }
                                if terms.size {
                                    for (f, anchor, target) in
                                        [(FIELD_TW, aw, t.w), (FIELD_TH, ah, t.h)]
                                    {
                                        let i = idx(a, f, gy, gx);
                                        let z = raw[i];
                                        let e = anchor * exp(z.min(MAX_LOG_SCALE));
                                        let live = z < MAX_LOG_SCALE && e > SQRT_FLOOR;
                                        let sp = sqrt(e.max(SQRT_FLOOR));
                                        let r = sqrt(target.max(SQRT_FLOOR)) - sp;
                                        out.size += weights.lambda_coord * r * r * inv_n;
                                        if live {
                                            // d sqrt(e) / dz = sqrt(e) / 2
                                            grad[i] += weights.lambda_coord * -r * sp * inv_n;
                                        }
                                    }
                                }
                                if terms.conf {
                                    let (l, d) = bce_logit(1.0, raw[io]);
                                    out.conf += l * inv_n;
                                    grad[io] += d * inv_n;
                                    for c in 0..nc {
                                        let i = idx(a, FIELD_CLASS + c, gy, gx);
                                        let tc = if t.class_id as usize == c { 1.0 } else { 0.0 };
                                        let (l, d) = bce_logit(tc, raw[i]);
                                        out.conf += l * inv_n;
                                        grad[i] += d * inv_n;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.total = out.coord + out.size + out.conf;
    Ok(out)
}
