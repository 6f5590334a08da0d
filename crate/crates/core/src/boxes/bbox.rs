use crate::error::{arg_err, Result};

/// Axis-aligned box in normalized center format.
///
/// `confidence` is `None` for ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    pub confidence: Option<f64>,
}

impl BoundingBox {
    /// A ground-truth box of class 0.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox {
            cx,
            cy,
            w,
            h,
            class_id: 0,
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox::new((x1 + x2) * 0.5, (y1 + y2) * 0.5, x2 - x1, y2 - y1)
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w * 0.5;
        let hh = self.h * 0.5;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Confidence, or 1 for ground truth.
    pub fn score(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let in01 = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !in01(self.cx) || !in01(self.cy) {
            return Err(arg_err!(
                "box center ({}, {}) outside [0,1]",
                self.cx,
                self.cy
            ));
        }
        if !(self.w > 0.0 && self.w <= 1.0 && self.h > 0.0 && self.h <= 1.0) {
            return Err(arg_err!(
                "box extent ({}, {}) outside (0,1]",
                self.w,
                self.h
            ));
        }
        if let Some(c) = self.confidence {
            if !in01(c) {
                return Err(arg_err!("confidence {c} outside [0,1]"));
            }
        }
        Ok(())
    }

    /// Clips corners to the unit square. `None` if nothing remains.
    pub fn clipped(&self) -> Option<BoundingBox> {
        let (x1, y1, x2, y2) = self.corners();
        let (x1, y1) = (x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
        let (x2, y2) = (x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0));
        if x2 <= x1 || y2 <= y1 {
            return None;
        }
        let mut b = BoundingBox::from_corners(x1, y1, x2, y2);
        b.class_id = self.class_id;
        b.confidence = self.confidence;
        Some(b)
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    // areas from the same corners as the intersection, so a box meets itself at exactly 1
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of two extents sharing a center.
pub fn iou_wh(w1: f64, h1: f64, w2: f64, h2: f64) -> f64 {
    let inter = w1.min(w2) * h1.min(h2);
    let union = w1 * h1 + w2 * h2 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
