use alloc::vec;
use alloc::vec::Vec;

use super::anchors::AnchorSet;
use super::bbox::{iou_wh, BoundingBox};
use crate::error::{dim_err, Result};
use crate::math::{exp, ln, logit, sigmoid};

pub const NUM_SCALES: usize = 3;
pub const ANCHORS_PER_SCALE: usize = 3;

pub const FIELD_TX: usize = 0;
pub const FIELD_TY: usize = 1;
pub const FIELD_TW: usize = 2;
pub const FIELD_TH: usize = 3;
pub const FIELD_OBJ: usize = 4;
/// First class logit; class `c` lives at `FIELD_CLASS + c`.
pub const FIELD_CLASS: usize = 5;

/// Raw log-scale values are clamped to this magnitude before `exp`.
pub(crate) const MAX_LOG_SCALE: f64 = 12.0;
/// Logit magnitude used when writing exact-inverse targets.
const SATURATED_LOGIT: f64 = 40.0;

/// Raw detector output for one scale: `B * (5 + C)` channels over an
/// `M x M` grid.
///
/// Values are stored channel-major, `(depth, M, M)`, with channel
/// `anchor * (5 + C) + field`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEncoding {
    pub scale_id: usize,
    pub grid: usize,
    pub num_classes: usize,
    pub anchors: [(f64, f64); 3],
    values: Vec<f64>,
}

impl GridEncoding {
    pub fn zeros(
        scale_id: usize,
        grid: usize,
        num_classes: usize,
        anchors: [(f64, f64); 3],
    ) -> Self {
        let depth = ANCHORS_PER_SCALE * (5 + num_classes);
        GridEncoding {
            scale_id,
            grid,
            num_classes,
            anchors,
            values: vec![0.0; depth * grid * grid],
        }
    }

    pub fn from_values(
        scale_id: usize,
        grid: usize,
        num_classes: usize,
        anchors: [(f64, f64); 3],
        values: Vec<f64>,
    ) -> Result<Self> {
        let depth = ANCHORS_PER_SCALE * (5 + num_classes);
        if values.len() != depth * grid * grid {
            return Err(dim_err!(
                "grid {grid} with depth {depth} needs {} values, got {}",
                depth * grid * grid,
                values.len()
            ));
        }
        Ok(GridEncoding {
            scale_id,
            grid,
            num_classes,
            anchors,
            values,
        })
    }

    pub fn depth(&self) -> usize {
        ANCHORS_PER_SCALE * (5 + self.num_classes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn offset(&self, anchor: usize, field: usize, gy: usize, gx: usize) -> usize {
        ((anchor * (5 + self.num_classes) + field) * self.grid + gy) * self.grid + gx
    }

    #[inline]
    pub fn raw(&self, anchor: usize, field: usize, gy: usize, gx: usize) -> f64 {
        self.values[self.offset(anchor, field, gy, gx)]
    }

    #[inline]
    pub fn set_raw(&mut self, anchor: usize, field: usize, gy: usize, gx: usize, v: f64) {
        let o = self.offset(anchor, field, gy, gx);
        self.values[o] = v;
    }

    /// Decoded box for one slot, unclipped, with confidence attached.
    pub fn decode_slot(&self, anchor: usize, gy: usize, gx: usize) -> BoundingBox {
        let m = self.grid as f64;
        let (aw, ah) = self.anchors[anchor];
        let cx = (gx as f64 + sigmoid(self.raw(anchor, FIELD_TX, gy, gx))) / m;
        let cy = (gy as f64 + sigmoid(self.raw(anchor, FIELD_TY, gy, gx))) / m;
        let w = aw * exp(self.raw(anchor, FIELD_TW, gy, gx).min(MAX_LOG_SCALE));
        let h = ah * exp(self.raw(anchor, FIELD_TH, gy, gx).min(MAX_LOG_SCALE));
        let obj = sigmoid(self.raw(anchor, FIELD_OBJ, gy, gx));
        let mut class_id = 0;
        let mut class_p = if self.num_classes == 0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
        for c in 0..self.num_classes {
            let p = sigmoid(self.raw(anchor, FIELD_CLASS + c, gy, gx));
            if p > class_p {
                class_p = p;
                class_id = c as u32;
            }
        }
        BoundingBox {
            cx,
            cy,
            w,
            h,
            class_id,
            confidence: Some(obj * class_p),
        }
    }
}

/// Decodes every slot and keeps boxes with confidence at or above the
/// threshold, clipped to the unit square.
pub fn decode_predictions(enc: &GridEncoding, conf_threshold: f64) -> Vec<BoundingBox> {
    let mut out = Vec::new();
    for a in 0..ANCHORS_PER_SCALE {
        for gy in 0..enc.grid {
            for gx in 0..enc.grid {
                let b = enc.decode_slot(a, gy, gx);
                if b.score() >= conf_threshold {
                    if let Some(c) = b.clipped() {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// Responsibility masks and matched ground truth for one scale.
///
/// Slot index is `(anchor * M + gy) * M + gx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTargets {
    pub scale_id: usize,
    pub grid: usize,
    pub anchors: [(f64, f64); 3],
    assigned: Vec<Option<BoundingBox>>,
}

impl ScaleTargets {
    fn new(scale_id: usize, grid: usize, anchors: [(f64, f64); 3]) -> Self {
        ScaleTargets {
            scale_id,
            grid,
            anchors,
            assigned: vec![None; ANCHORS_PER_SCALE * grid * grid],
        }
    }

    #[inline]
    pub fn slot(&self, anchor: usize, gy: usize, gx: usize) -> usize {
        (anchor * self.grid + gy) * self.grid + gx
    }

    pub fn num_slots(&self) -> usize {
        self.assigned.len()
    }

    /// `1^obj` for a slot.
    pub fn is_obj(&self, slot: usize) -> bool {
        self.assigned[slot].is_some()
    }

    /// `1^noobj` for a slot; always `!is_obj`.
    pub fn is_noobj(&self, slot: usize) -> bool {
        self.assigned[slot].is_none()
    }

    pub fn target(&self, slot: usize) -> Option<&BoundingBox> {
        self.assigned[slot].as_ref()
    }

    /// `(anchor, gy, gx, box)` for every responsible slot.
    pub fn responsible(&self) -> impl Iterator<Item = (usize, usize, usize, &BoundingBox)> + '_ {
        let m = self.grid;
        self.assigned
            .iter()
            .enumerate()
            .filter_map(move |(s, b)| b.as_ref().map(|b| (s / (m * m), (s / m) % m, s % m, b)))
    }

    /// Raw values that decode exactly to the assigned boxes with confidence
    /// saturated at 1 on responsible slots and 0 elsewhere.
    pub fn inverse_raw(&self, num_classes: usize) -> GridEncoding {
        let mut enc = GridEncoding::zeros(self.scale_id, self.grid, num_classes, self.anchors);
        let m = self.grid as f64;
        for a in 0..ANCHORS_PER_SCALE {
            for gy in 0..self.grid {
                for gx in 0..self.grid {
                    enc.set_raw(a, FIELD_OBJ, gy, gx, -SATURATED_LOGIT);
                    for c in 0..num_classes {
                        enc.set_raw(a, FIELD_CLASS + c, gy, gx, -SATURATED_LOGIT);
                    }
                }
            }
        }
        for (a, gy, gx, b) in self.responsible() {
            let (aw, ah) = self.anchors[a];
            enc.set_raw(a, FIELD_TX, gy, gx, logit(b.cx * m - gx as f64));
            enc.set_raw(a, FIELD_TY, gy, gx, logit(b.cy * m - gy as f64));
            enc.set_raw(a, FIELD_TW, gy, gx, ln(b.w / aw));
            enc.set_raw(a, FIELD_TH, gy, gx, ln(b.h / ah));
            enc.set_raw(a, FIELD_OBJ, gy, gx, SATURATED_LOGIT);
            if (b.class_id as usize) < num_classes {
                enc.set_raw(
                    a,
                    FIELD_CLASS + b.class_id as usize,
                    gy,
                    gx,
                    SATURATED_LOGIT,
                );
            }
        }
        enc
    }
}

/// Per-image training targets for all three scales.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTargets {
    pub scales: [ScaleTargets; NUM_SCALES],
    /// Boxes that found no free slot.
    pub dropped: usize,
}

impl DetectionTargets {
    pub fn num_objects(&self) -> usize {
        self.scales.iter().map(|s| s.responsible().count()).sum()
    }
}

/// Assigns every ground-truth box to one `(scale, cell, anchor)` slot.
///
/// The preferred anchor is the one of all nine with the highest
/// center-aligned IoU; the cell is the one containing the box center at
/// that anchor's scale. A box whose slot is already taken moves to its next
/// best anchor, and is dropped (with a warning) if all nine are taken.
pub fn encode_targets(
    labels: &[BoundingBox],
    anchors: &AnchorSet,
    grids: [usize; 3],
) -> Result<DetectionTargets> {
    for (s, &m) in grids.iter().enumerate() {
        if m == 0 {
            return Err(dim_err!("grid for scale {s} must be positive"));
        }
    }
    let mut scales = [
        ScaleTargets::new(0, grids[0], anchors.for_scale(0)),
        ScaleTargets::new(1, grids[1], anchors.for_scale(1)),
        ScaleTargets::new(2, grids[2], anchors.for_scale(2)),
    ];
    let mut dropped = 0;
    for b in labels {
        b.validate()?;
        let mut placed = false;
        for g in anchor_preference(b, anchors) {
            let (s, a) = AnchorSet::locate(g);
            let st = &mut scales[s];
            let m = st.grid;
            let slot = st.slot(a, cell_of(b.cy, m), cell_of(b.cx, m));
            if st.assigned[slot].is_none() {
                st.assigned[slot] = Some(BoundingBox {
                    confidence: None,
                    ..*b
                });
                placed = true;
                break;
            }
        }
        if !placed {
            dropped += 1;
            log::warn!(
                "dropping box at ({:.4}, {:.4}): every anchor slot is taken",
                b.cx,
                b.cy
            );
        }
    }
    Ok(DetectionTargets { scales, dropped })
}

/// Global anchor indices ordered by center-aligned IoU with the box,
/// best first; ties keep the smaller index.
pub(crate) fn anchor_preference(b: &BoundingBox, anchors: &AnchorSet) -> [usize; 9] {
    let mut order = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    let all = anchors.all();
    let ious: [f64; 9] = core::array::from_fn(|g| iou_wh(b.w, b.h, all[g].0, all[g].1));
    order.sort_by(|&x, &y| ious[y].total_cmp(&ious[x]));
    order
}

#[inline]
pub(crate) fn cell_of(coord: f64, m: usize) -> usize {
    let c = crate::math::floor(coord * m as f64);
    (c.max(0.0) as usize).min(m - 1)
}
