//! Image-quality metrics for super-resolved output and detection scoring.

mod detection;
mod quality;

pub use detection::{
    average_precision, average_precision_with, evaluate_detections, f1_score, match_detections,
    pr_curve, roc_auc, ApMode, DetectionReport, MatchResult,
};
pub use quality::{
    gaussian_taps, mssim, mssim_scales, psnr, psnr_8bit, uqi, vif, MSSIM_WEIGHTS, VIF_SIGMA_N_SQ,
};

use crate::error::Result;
use crate::imaging::ImageTensor;

/// The four quality scores of one image pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// dB; `+inf` for identical images.
    pub psnr: f64,
    pub mssim: f64,
    pub uqi: f64,
    pub vif: f64,
}

impl MetricReport {
    pub fn evaluate(reference: &ImageTensor, test: &ImageTensor) -> Result<MetricReport> {
        Ok(MetricReport {
            psnr: psnr(reference, test)?,
            mssim: mssim(reference, test)?,
            uqi: uqi(reference, test)?,
            vif: vif(reference, test)?,
        })
    }

    /// Per-field mean; infinite PSNRs propagate.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let f = |g: fn(&MetricReport) -> f64| reports.iter().map(g).sum::<f64>() / n;
        Some(MetricReport {
            psnr: f(|r| r.psnr),
            mssim: f(|r| r.mssim),
            uqi: f(|r| r.uqi),
            vif: f(|r| r.vif),
        })
    }
}
