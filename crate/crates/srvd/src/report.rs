//! CSV and text outputs.

use std::fmt::Write as _;
use std::path::Path;

use srvd_core::metrics::{DetectionReport, MetricReport};
use srvd_core::LossBreakdown;

use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

fn write_rows<R: IntoIterator<Item = Vec<String>>>(
    path: &Path,
    header: &[&str],
    rows: R,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const LOSS_HEADER: [&str; 10] = [
    "step",
    "content",
    "perceptual",
    "adversarial",
    "detection",
    "total",
    "w_content",
    "w_perceptual",
    "w_adversarial",
    "w_detection",
];

/// One row per recorded step, 1-based.
pub fn write_loss_csv(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    let rows = history.iter().enumerate().map(|(i, b)| {
        let w = b.weights.as_array();
        let mut r = vec![(i + 1).to_string()];
        r.extend(
            [
                b.content,
                b.perceptual,
                b.adversarial_g,
                b.detection,
                b.total,
                w[0],
                w[1],
                w[2],
                w[3],
            ]
            .map(|v| v.to_string()),
        );
        r
    });
    write_rows(path, &LOSS_HEADER, rows)
}

/// Per-image quality rows followed by a `mean` row.
pub fn write_metrics_csv(
    path: &Path,
    per_image: &[(String, MetricReport)],
    mean: &MetricReport,
) -> Result<()> {
    let row = |name: &str, m: &MetricReport| {
        vec![
            name.to_string(),
            m.psnr.to_string(),
            m.mssim.to_string(),
            m.uqi.to_string(),
            m.vif.to_string(),
        ]
    };
    let rows = per_image
        .iter()
        .map(|(n, m)| row(n, m))
        .chain(std::iter::once(row("mean", mean)));
    write_rows(path, &["image", "psnr", "mssim", "uqi", "vif"], rows)
}

pub fn write_points_csv(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    write_rows(
        path,
        &header,
        points
            .iter()
            .map(|(a, b)| vec![a.to_string(), b.to_string()]),
    )
}

/// A JSON-shaped block with detection scores on a 0 to 1 scale, plus the
/// percent form of mAP used for display.
pub fn detection_summary(r: &DetectionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{{");
    let _ = writeln!(s, "  \"map50\": {},", r.map50);
    let _ = writeln!(s, "  \"map50_percent\": {},", 100.0 * r.map50);
    let _ = writeln!(s, "  \"f1\": {},", r.f1);
    let _ = writeln!(s, "  \"auc\": {}", r.auc);
    let _ = writeln!(s, "}}");
    s
}

/// Reads a CSV back as a header and string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(
            rec.map_err(|e| csv_err(path, e))?
                .iter()
                .map(String::from)
                .collect(),
        );
    }
    Ok((header, rows))
}
