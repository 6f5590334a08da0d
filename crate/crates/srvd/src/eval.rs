//! Super-resolve, score and detect over a set of paired samples.

use rayon::prelude::*;
use srvd_core::metrics::{evaluate_detections, DetectionReport, MetricReport};
use srvd_core::nets::{detect, generator_forward};
use srvd_core::{BoundingBox, ImageTensor, PairedSample, ParameterSet};

use crate::error::Result;

/// Lowest confidence decoded for ranking; the F1 threshold is applied later.
pub const DECODE_FLOOR: f64 = 1e-3;

pub trait SuperResolver: Sync {
    fn super_resolve(&self, lr: &ImageTensor) -> Result<ImageTensor>;
}

pub trait Detector: Sync {
    fn detect(&self, img: &ImageTensor) -> Result<Vec<BoundingBox>>;
}

/// Generator and detector of one parameter set.
pub struct Networks {
    pub params: ParameterSet,
    pub nms_threshold: f64,
}

impl SuperResolver for Networks {
    fn super_resolve(&self, lr: &ImageTensor) -> Result<ImageTensor> {
        Ok(generator_forward(&self.params, lr)?.full)
    }
}

impl Detector for Networks {
    fn detect(&self, img: &ImageTensor) -> Result<Vec<BoundingBox>> {
        Ok(detect(&self.params, img, DECODE_FLOOR, self.nms_threshold)?)
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub per_image: Vec<(String, MetricReport)>,
    pub mean: MetricReport,
    pub detection: DetectionReport,
}

/// Scores every sample in parallel; results keep input order.
pub fn evaluate(
    samples: &[(String, PairedSample)],
    sr: &dyn SuperResolver,
    det: &dyn Detector,
    iou_threshold: f64,
    conf_threshold: f64,
) -> Result<EvalReport> {
    let scored = samples
        .par_iter()
        .map(|(name, s)| {
            let up = sr.super_resolve(&s.lr)?;
            let m = MetricReport::evaluate(&s.hr, &up)?;
            let boxes = det.detect(&up)?;
            Ok((name.clone(), m, boxes))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_image: Vec<(String, MetricReport)> =
        scored.iter().map(|(n, m, _)| (n.clone(), *m)).collect();
    let reports: Vec<MetricReport> = per_image.iter().map(|p| p.1).collect();
    let mean = MetricReport::mean(&reports).unwrap_or(MetricReport {
        psnr: f64::NAN,
        mssim: f64::NAN,
        uqi: f64::NAN,
        vif: f64::NAN,
    });
    let preds: Vec<Vec<BoundingBox>> = scored.into_iter().map(|t| t.2).collect();
    let gts: Vec<Vec<BoundingBox>> = samples.iter().map(|(_, s)| s.labels.clone()).collect();
    let detection = evaluate_detections(&preds, &gts, iou_threshold, conf_threshold)?;
    Ok(EvalReport {
        per_image,
        mean,
        detection,
    })
}
