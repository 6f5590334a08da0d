use alloc::vec;
use alloc::vec::Vec;

use crate::boxes::{iou, BoundingBox};
use crate::error::{arg_err, Result};

/// Outcome of matching one image's predictions against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Predictions in descending confidence with their TP flag.
    pub matched: Vec<(BoundingBox, bool)>,
    pub unmatched_gt: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.matched.iter().filter(|m| m.1).count()
    }

    pub fn false_positives(&self) -> usize {
        self.matched.len() - self.true_positives()
    }
}

/// Sort indices by confidence descending; ties keep input order.
fn rank_desc(conf: impl Iterator<Item = f64>) -> Vec<usize> {
    let c: Vec<f64> = conf.collect();
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]));
    idx
}

/// Greedy matching: each prediction, in descending confidence, takes the
/// still-unmatched GT of highest IoU (lowest index on ties). It is a TP iff
/// that IoU reaches the threshold; otherwise the GT stays available.
pub fn match_detections(
    preds: &[BoundingBox],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut matched = Vec::with_capacity(preds.len());
    for i in rank_desc(preds.iter().map(|p| p.score())) {
        let p = preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&p, g);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let tp = match best {
            Some((j, v)) if v >= iou_threshold => {
                taken[j] = true;
                true
            }
            _ => false,
        };
        matched.push((p, tp));
    }
    MatchResult {
        matched,
        unmatched_gt: taken.iter().filter(|t| !**t).count(),
    }
}

/// Running `(recall, precision)` at every rank, confidence descending.
pub fn pr_curve(matched: &[(f64, bool)], n_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    let mut out = Vec::with_capacity(matched.len());
    for (k, i) in rank_desc(matched.iter().map(|m| m.0))
        .into_iter()
        .enumerate()
    {
        if matched[i].1 {
            tp += 1;
        }
        let recall = if n_gt == 0 {
            0.0
        } else {
            tp as f64 / n_gt as f64
        };
        out.push((recall, tp as f64 / (k + 1) as f64));
    }
    out
}

/// How precision is summarized over recall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ApMode {
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    #[default]
    ElevenPoint,
    /// Area under the monotone (interpolated) precision envelope.
    Continuous,
}

/// Interpolated average precision and the raw PR points.
pub fn average_precision(matched: &[(f64, bool)], n_gt: usize) -> (f64, Vec<(f64, f64)>) {
    average_precision_with(matched, n_gt, ApMode::ElevenPoint)
}

pub fn average_precision_with(
    matched: &[(f64, bool)],
    n_gt: usize,
    mode: ApMode,
) -> (f64, Vec<(f64, f64)>) {
    let pts = pr_curve(matched, n_gt);
    if n_gt == 0 {
        return (if matched.is_empty() { 1.0 } else { 0.0 }, pts);
    }
    // envelope[k] = max precision at ranks >= k, recall being non-decreasing
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let ap = match mode {
        ApMode::ElevenPoint => {
            let mut sum = 0.0;
            for t in 0..=10 {
                let r = t as f64 / 10.0;
                if let Some(k) = pts.iter().position(|p| p.0 >= r - 1e-12) {
                    sum += envelope[k];
                }
            }
            sum / 11.0
        }
        ApMode::Continuous => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for (k, p) in pts.iter().enumerate() {
                area += (p.0 - prev) * envelope[k];
                prev = p.0;
            }
            area
        }
    };
    (ap, pts)
}

/// Harmonic mean of precision and recall; 0 when undefined.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// Trapezoidal ROC AUC over distinct confidence thresholds; tied scores
/// move together. False-positive rates are normalized by the larger of the
/// observed negatives and `n_negatives_basis`; the curve is closed at (1, 1).
pub fn roc_auc(scores: &[(f64, bool)], n_negatives_basis: usize) -> Result<(f64, Vec<(f64, f64)>)> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(arg_err!(
            "ROC needs both classes: {pos} positives, {neg} negatives"
        ));
    }
    let basis = neg.max(n_negatives_basis) as f64;
    let order = rank_desc(scores.iter().map(|s| s.0));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let c = scores[order[k]].0;
        while k < order.len() && scores[order[k]].0 == c {
            if scores[order[k]].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        pts.push((fp as f64 / basis, tp as f64 / pos as f64));
    }
    if pts.last() != Some(&(1.0, 1.0)) {
        pts.push((1.0, 1.0));
    }
    let auc = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok((auc, pts))
}

/// Pooled detection scores over a set of images.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub map50: f64,
    pub f1: f64,
    pub pr_points: Vec<(f64, f64)>,
    pub roc_points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Match every image, pool the ranked outcomes, and score them. F1 counts
/// predictions with confidence at or above `conf_threshold`. With no false
/// positives the ROC is the perfect curve (AUC 1); with no true positives
/// it scores 0.
pub fn evaluate_detections(
    preds: &[Vec<BoundingBox>],
    gts: &[Vec<BoundingBox>],
    iou_threshold: f64,
    conf_threshold: f64,
) -> Result<DetectionReport> {
    if preds.len() != gts.len() {
        return Err(arg_err!(
            "{} prediction lists for {} images",
            preds.len(),
            gts.len()
        ));
    }
    let mut pooled = Vec::new();
    let mut n_gt = 0;
    for (p, g) in preds.iter().zip(gts) {
        n_gt += g.len();
        pooled.extend(
            match_detections(p, g, iou_threshold)
                .matched
                .into_iter()
                .map(|(b, tp)| (b.score(), tp)),
        );
    }
    let (map50, pr_points) = average_precision(&pooled, n_gt);
    let above = pooled.iter().filter(|m| m.0 >= conf_threshold);
    let tp = above.clone().filter(|m| m.1).count();
    let fp = above.count() - tp;
    let f1 = f1_score(tp, fp, n_gt - tp);
    let (auc, roc_points) = match roc_auc(&pooled, 0) {
        Ok(r) => r,
        Err(_) if pooled.iter().any(|m| m.1) => (1.0, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]),
        Err(_) if pooled.is_empty() && n_gt == 0 => (1.0, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]),
        Err(_) => (0.0, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]),
    };
    Ok(DetectionReport {
        map50,
        f1,
        pr_points,
        roc_points,
        auc,
    })
}
