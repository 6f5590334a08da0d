use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::boxes::BoundingBox;
use crate::error::{Error, Result};

fn parse_fields<const N: usize>(line: &str, lineno: usize) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut it = line.split_whitespace();
    for (i, o) in out.iter_mut().enumerate() {
        let tok = it.next().ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("expected {N} fields, found {i}"),
        })?;
        *o = tok.parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("not a number: {tok:?}"),
        })?;
    }
    if it.next().is_some() {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {N} fields, found more"),
        });
    }
    Ok(out)
}

fn check_box(b: BoundingBox, lineno: usize) -> Result<BoundingBox> {
    b.validate().map_err(|e| Error::Parse {
        line: lineno,
        message: format!("{e}"),
    })?;
    Ok(b)
}

/// Parses `class cx cy w h` lines. Blank lines are skipped; every class maps
/// to the single vehicle class 0. Line numbers are 1-based.
pub fn parse_labels(text: &str) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let [class, cx, cy, w, h] = parse_fields::<5>(line, i + 1)?;
        if class < 0.0 || class != crate::math::floor(class) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("class id {class} is not a non-negative integer"),
            });
        }
        out.push(check_box(BoundingBox::new(cx, cy, w, h), i + 1)?);
    }
    Ok(out)
}

/// One `class cx cy w h` line per box; values use shortest round-trip form.
pub fn format_labels(boxes: &[BoundingBox]) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(s, "{} {} {} {} {}", b.class_id, b.cx, b.cy, b.w, b.h);
    }
    s
}

/// Parses `class confidence cx cy w h` lines.
pub fn parse_detections(text: &str) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let [class, conf, cx, cy, w, h] = parse_fields::<6>(line, i + 1)?;
        if class < 0.0 || class != crate::math::floor(class) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("class id {class} is not a non-negative integer"),
            });
        }
        let b = BoundingBox::new(cx, cy, w, h)
            .with_class(class as u32)
            .with_confidence(conf);
        out.push(check_box(b, i + 1)?);
    }
    Ok(out)
}

pub fn format_detections(boxes: &[BoundingBox]) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            b.class_id,
            b.score(),
            b.cx,
            b.cy,
            b.w,
            b.h
        );
    }
    s
}
